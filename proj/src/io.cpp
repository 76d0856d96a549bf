#include "autobasis/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "autobasis/error.hpp"

namespace autobasis {

bool Table::has(std::string_view name) const {
    for (const auto& h : header)
        if (h == name) return true;
    return false;
}

std::size_t Table::column(std::string_view name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == name) return j;
    throw InvalidInput("no column named '" + std::string(name) + "'");
}

Vector Table::numeric(std::string_view name) const {
    const std::size_t j = column(name);
    Vector v(size());
    for (Index i = 0; i < size(); ++i)
        v(i) = parse_number(rows[static_cast<std::size_t>(i)][j],
                            "column '" + std::string(name) + "', row " + std::to_string(i + 1));
    return v;
}

Matrix Table::numeric(const std::vector<std::string>& names) const {
    Matrix m(size(), static_cast<Index>(names.size()));
    for (std::size_t k = 0; k < names.size(); ++k) m.col(static_cast<Index>(k)) = numeric(names[k]);
    return m;
}

std::vector<std::string> Table::text(std::string_view name) const {
    const std::size_t j = column(name);
    std::vector<std::string> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[j]);
    return out;
}

void Table::add_row(std::vector<std::string> row) {
    if (row.size() != header.size()) throw ContractViolation("row width does not match the header");
    rows.push_back(std::move(row));
}

Table parse_csv(std::string_view text, std::string_view source) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> rec;
    std::string field;
    bool quoted = false, field_started = false;
    std::size_t line = 1;

    auto end_record = [&] {
        rec.push_back(std::move(field));
        field.clear();
        // A record made of one empty unquoted field is a blank line.
        if (!(rec.size() == 1 && rec[0].empty() && !field_started)) records.push_back(std::move(rec));
        rec.clear();
        field_started = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field += c;
            }
            continue;
        }
        switch (c) {
        case '"':
            if (!field.empty())
                throw InvalidInput(std::string(source) + ":" + std::to_string(line) + ": stray quote in field");
            quoted = field_started = true;
            break;
        case ',':
            rec.push_back(std::move(field));
            field.clear();
            field_started = true;
            break;
        case '\r':
            if (i + 1 < text.size() && text[i + 1] == '\n') break;
            end_record();
            ++line;
            break;
        case '\n':
            end_record();
            ++line;
            break;
        default:
            field += c;
            field_started = true;
        }
    }
    if (quoted) throw InvalidInput(std::string(source) + ": unterminated quoted field");
    if (field_started || !field.empty() || !rec.empty()) end_record();

    if (records.empty()) throw InvalidInput(std::string(source) + ": missing header row");
    Table t;
    t.header = std::move(records.front());
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != t.header.size())
            throw InvalidInput(std::string(source) + ": record " + std::to_string(r) + " has " +
                               std::to_string(records[r].size()) + " fields, header has " +
                               std::to_string(t.header.size()));
        t.rows.push_back(std::move(records[r]));
    }
    return t;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("error while reading '" + path + "'");
    return ss.str();
}

Table read_csv(const std::string& path) { return parse_csv(read_text(path), path); }

namespace {

void write_field(std::ostream& out, const std::string& f) {
    if (f.find_first_of(",\"\r\n") == std::string::npos) {
        out << f;
        return;
    }
    out << '"';
    for (char c : f) {
        if (c == '"') out << '"';
        out << c;
    }
    out << '"';
}

}  // namespace

void write_csv(std::ostream& out, const Table& table) {
    auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (j) out << ',';
            write_field(out, r[j]);
        }
        out << '\n';
    };
    line(table.header);
    for (const auto& r : table.rows) line(r);
}

void write_text(const std::string& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) throw IoError("error while writing '" + path + "'");
}

void write_csv(const std::string& path, const Table& table) {
    std::ostringstream ss;
    write_csv(ss, table);
    write_text(path, ss.str());
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) return "0";  // folds -0
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 12);
    return std::string(buf, res.ptr);
}

double round_to_printed(double v) {
    if (!std::isfinite(v)) return v;
    const std::string s = format_number(v);
    double out = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), out);
    return out;
}

double parse_number(std::string_view text, std::string_view what) {
    std::string_view t = text;
    while (!t.empty() && t.front() == ' ') t.remove_prefix(1);
    while (!t.empty() && t.back() == ' ') t.remove_suffix(1);
    if (!t.empty() && t.front() == '+') t.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
        throw InvalidInput(std::string(what) + ": '" + std::string(text) + "' is not a number");
    return v;
}

std::vector<std::string> split_list(std::string_view text, char delim) {
    std::vector<std::string> out;
    if (text.empty()) return out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = text.find(delim, start);
        std::string_view piece = text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        while (!piece.empty() && piece.front() == ' ') piece.remove_prefix(1);
        while (!piece.empty() && piece.back() == ' ') piece.remove_suffix(1);
        out.emplace_back(piece);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace autobasis
