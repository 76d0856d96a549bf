#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "autobasis/numkernel.hpp"

namespace autobasis {

/// A CSV file held as text: one header row, then records of equal width.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    Index size() const noexcept { return static_cast<Index>(rows.size()); }
    bool has(std::string_view name) const;
    /// Position of a named column; InvalidInput when absent.
    std::size_t column(std::string_view name) const;
    /// Named column parsed as numbers; InvalidInput names the bad cell.
    Vector numeric(std::string_view name) const;
    /// Several columns side by side, in the order given.
    Matrix numeric(const std::vector<std::string>& names) const;
    std::vector<std::string> text(std::string_view name) const;

    void add_row(std::vector<std::string> row);
};

/// RFC 4180 reading: quoted fields may hold commas, doubled quotes and line
/// breaks; CRLF endings are accepted. Blank lines are skipped.
Table parse_csv(std::string_view text, std::string_view source = "<input>");
Table read_csv(const std::string& path);

void write_csv(std::ostream& out, const Table& table);
void write_csv(const std::string& path, const Table& table);

/// Writes text to path, or throws IoError naming the path.
void write_text(const std::string& path, std::string_view text);
std::string read_text(const std::string& path);

/// Shortest general-format rendering with at most 12 significant digits,
/// independent of the global locale. Non-finite values print as nan/inf/-inf.
std::string format_number(double v);
/// The value format_number(v) denotes.
double round_to_printed(double v);

/// Locale-independent parse of a whole field; InvalidInput on trailing junk.
double parse_number(std::string_view text, std::string_view what);

/// Splits on a delimiter, trimming surrounding spaces; empty input gives {}.
std::vector<std::string> split_list(std::string_view text, char delim = ',');

}  // namespace autobasis
