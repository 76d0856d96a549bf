#include "autobasis/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <numeric>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "autobasis/diagnose.hpp"
#include "autobasis/error.hpp"
#include "autobasis/io.hpp"
#include "autobasis/lmm.hpp"
#include "autobasis/probit.hpp"

namespace autobasis::cli {
namespace {

using json = nlohmann::ordered_json;

// Random-effect columns beyond this many are drawn as one summed curve.
constexpr Index max_component_curves = 100;

// The JSON library's float printer is not always shortest, so numbers travel
// as marked strings holding their 12-digit text and are unquoted by dump().
constexpr char number_mark = '\x1f';

json num(double v) {
    if (!std::isfinite(v)) return nullptr;
    return std::string(1, number_mark) + format_number(v);
}
json num(const std::optional<double>& v) { return v ? num(*v) : json(nullptr); }

json nums(const Vector& v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
    return a;
}

json rows_of(const Matrix& m) {
    json a = json::array();
    for (Index i = 0; i < m.rows(); ++i) a.push_back(nums(m.row(i).transpose()));
    return a;
}

std::string dump(const json& j) {
    const std::string text = j.dump(2);
    const std::string marked = "\"\\u001f";
    std::string out;
    std::size_t pos = 0;
    for (std::size_t hit; (hit = text.find(marked, pos)) != std::string::npos;) {
        const std::size_t end = text.find('"', hit + marked.size());
        out.append(text, pos, hit - pos);
        out.append(text, hit + marked.size(), end - hit - marked.size());
        pos = end + 1;
    }
    out.append(text, pos);
    return out + "\n";
}

void emit(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-") out << text;
    else write_text(path, text);
}

std::string csv_text(const Table& t) {
    std::ostringstream ss;
    write_csv(ss, t);
    return ss.str();
}

std::optional<long long> parse_integer(std::string_view s) {
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::vector<std::string> column_list(const std::string& flag, const char* what) {
    auto v = split_list(flag);
    for (const auto& s : v)
        if (s.empty()) throw InvalidInput(std::string(what) + " has an empty column name");
    return v;
}

Matrix with_intercept(const Matrix& covariates) {
    Matrix x(covariates.rows(), covariates.cols() + 1);
    x.col(0).setOnes();
    x.rightCols(covariates.cols()) = covariates;
    return x;
}

// Knots from an integer count, a comma list of 1-D positions, or a CSV path.
Coordinates parse_knots(const std::string& text, const Coordinates& coords,
                        const std::vector<std::string>& coord_names, Index default_count) {
    if (text.empty()) return default_knots(coords, default_count);
    if (text.find(',') != std::string::npos) {
        if (coords.dim() != 1) throw InvalidInput("a knot list needs 1-D coordinates; pass a CSV path instead");
        std::vector<double> pos;
        for (const auto& s : split_list(text)) pos.push_back(parse_number(s, "--knots"));
        return Coordinates(pos);
    }
    if (const auto count = parse_integer(text)) {
        if (*count < 1) throw InvalidInput("--knots needs a positive count");
        return default_knots(coords, static_cast<Index>(*count));
    }
    const Table t = read_csv(text);
    bool named = true;
    for (const auto& n : coord_names) named = named && t.has(n);
    if (named) return Coordinates(t.numeric(coord_names));
    if (static_cast<Index>(t.header.size()) != coords.dim())
        throw InvalidInput("knot file '" + text + "' must have the coordinate columns");
    return Coordinates(t.numeric(t.header));
}

// Twice the widest knot spacing, so each point falls in at least one window.
double default_bandwidth(const Coordinates& coords, const Coordinates& knots) {
    if (knots.size() < 2) {
        const double d = coords.max_distance();
        return d > 0.0 ? 2.0 * d : 1.0;
    }
    double widest = 0.0;
    for (Index a = 0; a < knots.size(); ++a) {
        double nearest = std::numeric_limits<double>::infinity();
        for (Index b = 0; b < knots.size(); ++b)
            if (a != b) nearest = std::min(nearest, knots.distance(a, knots, b));
        widest = std::max(widest, nearest);
    }
    return widest > 0.0 ? 2.0 * widest : 1.0;
}

// ---------------------------------------------------------------- LMM models

struct ModelFlags {
    std::string input, y, x, coords = "t", group, family, basis, mean_basis, knots;
    double phi = 0.0, bandwidth = 0.0, level = 0.95;
    int degree = 2, max_lag = -1;
    CLI::Option* phi_opt = nullptr;
    CLI::Option* bandwidth_opt = nullptr;

    bool has_phi() const { return phi_opt && phi_opt->count() > 0; }
};

void add_model_flags(CLI::App& sub, ModelFlags& f) {
    sub.add_option("--input", f.input, "data CSV")->required();
    sub.add_option("--y", f.y, "response column")->required();
    sub.add_option("--x", f.x, "covariate columns, comma separated (intercept is added)");
    sub.add_option("--coords", f.coords, "coordinate columns, comma separated (row order when t is absent)")->capture_default_str();
    sub.add_option("--group", f.group, "label column for --basis group");
    sub.add_option("--family", f.family, "correlation family")
        ->check(CLI::IsMember({"ar1", "gaussian", "exponential"}));
    f.phi_opt = sub.add_option("--phi", f.phi, "fix phi instead of estimating it");
    sub.add_option("--basis", f.basis, "first-order random effect")
        ->check(CLI::IsMember({"eigen", "gauss-kernel", "uniform-kernel", "poly", "sq", "group", "pp"}));
    sub.add_option("--mean-basis", f.mean_basis, "polynomial mean in place of the intercept")
        ->check(CLI::IsMember({"poly", "sq"}));
    sub.add_option("--knots", f.knots, "knot count, comma list (1-D) or CSV path");
    f.bandwidth_opt = sub.add_option("--bandwidth", f.bandwidth, "uniform-kernel window width")
                          ->check(CLI::PositiveNumber);
    sub.add_option("--degree", f.degree, "polynomial degree")->capture_default_str();
    sub.add_option("--level", f.level, "confidence level")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    sub.add_option("--max-lag", f.max_lag, "residual ACF lags (default min(10, (n-1)/2))");
}

struct Model {
    Table table;
    std::vector<std::string> coord_names;
    Coordinates coords;
    Vector y;
    std::vector<std::string> covariate_names;
    Matrix covariates;
    std::optional<BasisExpansion> mean_basis;
    std::string kind;
    LmmSpec spec;
};

Vector line_of(const Coordinates& c, const std::string& what) {
    if (c.dim() != 1) throw InvalidInput(what + " needs 1-D coordinates");
    return c.points().col(0);
}

BasisExpansion line_basis(const std::string& which, const ModelFlags& f, const Model& m) {
    const Vector t = line_of(m.coords, "a " + which + " basis");
    if (which == "poly") return polynomial_basis(t, f.degree);
    const Coordinates k = parse_knots(f.knots, m.coords, m.coord_names, 3);
    return shifted_quadratic_basis(t, line_of(k, "shifted quadratic knots"));
}

FirstOrder first_order_from(const ModelFlags& f, const Model& m, std::optional<Family> family,
                            std::optional<double> phi) {
    const std::string& b = f.basis;
    auto need_family = [&] {
        if (!family) throw InvalidInput("--basis " + b + " needs --family");
        return *family;
    };
    if (b == "eigen") {
        const Family fam = need_family();
        return phi ? FirstOrder::fixed(eigen_basis(m.coords, CorrelationModel(fam, *phi)))
                   : first_order_eigen(m.coords, fam);
    }
    if (b == "gauss-kernel") {
        const Coordinates k = parse_knots(f.knots, m.coords, m.coord_names, 10);
        return phi ? FirstOrder::fixed(gaussian_kernel_basis(m.coords, k, *phi))
                   : first_order_gaussian_kernel(m.coords, k);
    }
    if (b == "uniform-kernel") {
        const Coordinates k = parse_knots(f.knots, m.coords, m.coord_names, 10);
        const double bw = f.bandwidth_opt->count() ? f.bandwidth : default_bandwidth(m.coords, k);
        return FirstOrder::fixed(uniform_kernel_basis(m.coords, k, bw));
    }
    if (b == "pp") {
        const Family fam = need_family();
        const Coordinates k = parse_knots(f.knots, m.coords, m.coord_names, 10);
        return phi ? FirstOrder::fixed(predictive_process_basis(m.coords, k, CorrelationModel(fam, *phi)))
                   : first_order_predictive_process(m.coords, k, fam);
    }
    if (b == "poly" || b == "sq") return FirstOrder::fixed(line_basis(b, f, m));
    if (b == "group") {
        if (f.group.empty()) throw InvalidInput("--basis group needs --group COLUMN");
        return FirstOrder::fixed(grouping_basis(m.table.text(f.group)));
    }
    throw InvalidInput("unknown basis '" + b + "'");
}

Model build_model(const ModelFlags& f) {
    Model m;
    m.table = read_csv(f.input);
    if (m.table.size() == 0) throw InvalidInput("'" + f.input + "' has no data rows");
    m.coord_names = column_list(f.coords, "--coords");
    if (m.coord_names.empty()) throw InvalidInput("--coords needs at least one column");
    if (m.coord_names == std::vector<std::string>{"t"} && !m.table.has("t")) {
        // No time column: rows are taken to be equally spaced in order.
        std::vector<double> t(static_cast<std::size_t>(m.table.size()));
        std::iota(t.begin(), t.end(), 1.0);
        m.coords = Coordinates(t);
    } else {
        m.coords = Coordinates(m.table.numeric(m.coord_names));
    }
    m.y = m.table.numeric(f.y);
    m.covariate_names = column_list(f.x, "--x");
    m.covariates = m.table.numeric(m.covariate_names);

    std::optional<Family> family;
    if (!f.family.empty()) family = parse_family(f.family);
    std::optional<double> phi;
    if (f.has_phi()) {
        phi = f.phi;
        if (family) CorrelationModel(*family, *phi).validate();
    }

    Matrix x;
    std::vector<std::string> names;
    if (!f.mean_basis.empty()) {
        m.mean_basis = line_basis(f.mean_basis, f, m);
        x.resize(m.y.size(), m.mean_basis->cols() + m.covariates.cols());
        x << m.mean_basis->matrix(), m.covariates;
        for (const auto& c : m.mean_basis->columns()) names.push_back(c.label);
    } else {
        x = with_intercept(m.covariates);
        names.push_back("intercept");
    }
    names.insert(names.end(), m.covariate_names.begin(), m.covariate_names.end());

    RandomEffect random = NoRandom{};
    if (!f.basis.empty()) {
        random = first_order_from(f, m, family, phi);
        m.kind = "first-order";
    } else if (family) {
        random = SecondOrder{*family, phi};
        m.kind = "second-order";
    } else {
        if (phi) throw InvalidInput("--phi needs --family or --basis");
        m.kind = m.mean_basis ? "mean-basis" : "ols";
    }
    m.spec = LmmSpec{std::move(x), std::move(names), m.coords, std::move(random), true};
    m.spec.validate();
    return m;
}

LmmFit fit_model(const Model& m, std::ostream& err) {
    try {
        return fit_ml(m.y, m.spec);
    } catch (const NonConvergence& e) {
        if (!std::isfinite(e.best_fit().loglik)) throw;
        err << "warning: optimizer did not converge; reporting the best point found\n";
        return e.best_fit();
    }
}

Matrix covariates_at(const Model& m, const Table& grid, const Coordinates& at) {
    const Matrix cov = grid.numeric(m.covariate_names);
    if (!m.mean_basis) return with_intercept(cov);
    const Matrix z = m.mean_basis->evaluate(at);
    Matrix x(z.rows(), z.cols() + cov.cols());
    x << z, cov;
    return x;
}

// Columns of X scaled by beta, then the random effect: the curves sum to the fit.
std::vector<std::pair<std::string, Vector>> components(const LmmFit& fit) {
    std::vector<std::pair<std::string, Vector>> out;
    for (Index k = 0; k < fit.beta.size(); ++k)
        out.emplace_back(fit.spec.column_names[static_cast<std::size_t>(k)], fit.spec.x.col(k) * fit.beta(k));
    if (!fit.spec.has_random()) return out;
    if (fit.basis && fit.basis->cols() <= max_component_curves) {
        const Vector a = blup_alpha(fit);
        for (Index j = 0; j < fit.basis->cols(); ++j)
            out.emplace_back(fit.basis->columns()[static_cast<std::size_t>(j)].label, fit.basis->matrix().col(j) * a(j));
    } else {
        out.emplace_back("random_effect", blup_eta(fit));
    }
    return out;
}

std::optional<BasisExpansion> diagnostic_basis(const Model& m, const LmmFit& fit) {
    if (fit.basis) return *fit.basis;
    if (const auto* so = std::get_if<SecondOrder>(&m.spec.random))
        return eigen_basis(m.coords, CorrelationModel(so->family, *fit.phi));
    return m.mean_basis;
}

json diagnostics_json(const Model& m, const LmmFit& fit, const Vector& resid, Index max_lag) {
    const auto basis = diagnostic_basis(m, fit);
    const DiagnosticsReport rep = diagnose(resid, max_lag, basis, m.covariates);
    json d;
    d["max_lag"] = max_lag;
    json acf = json::array();
    for (const auto& [lag, v] : rep.residual_acf) acf.push_back(num(v));
    d["residual_acf"] = acf;
    d["acf_band"] = num(2.0 / std::sqrt(static_cast<double>(resid.size())));
    d["covariates"] = m.covariate_names;
    if (basis) {
        d["basis_columns"] = basis->cols();
        d["collinearity_r2"] = rows_of(rep.collinearity_r2);
        d["max_pairwise_basis_r2"] = basis->cols() >= 2 ? num(rep.max_pairwise_basis_r2) : json(nullptr);
        d["condition_number"] = num(rep.condition_number);
        if (rep.strongest_basis_column >= 0) {
            d["strongest"] = {
                {"basis_column", basis->columns()[static_cast<std::size_t>(rep.strongest_basis_column)].label},
                {"covariate", m.covariate_names[static_cast<std::size_t>(rep.strongest_covariate)]},
                {"r2", num(rep.strongest_r2)}};
        } else {
            d["strongest"] = nullptr;
        }
    }
    return d;
}

int cmd_fit(const ModelFlags& f, const std::string& output, const std::string& summary, std::ostream& out,
            std::ostream& err) {
    const Model m = build_model(f);
    const LmmFit fit = fit_model(m, err);
    const Index n = m.y.size();
    const Vector fitted = fitted_values(fit);
    const Vector eta = fit.spec.has_random() ? blup_eta(fit) : Vector::Zero(n);
    const Vector resid = m.y - fitted;
    const Index max_lag = f.max_lag >= 0 ? f.max_lag : std::min<Index>(10, (n - 1) / 2);

    json s;
    s["command"] = "fit";
    s["model"] = {{"kind", m.kind},
                  {"family", f.family.empty() ? json(nullptr) : json(f.family)},
                  {"basis", f.basis.empty() ? json(nullptr) : json(f.basis)},
                  {"mean_basis", f.mean_basis.empty() ? json(nullptr) : json(f.mean_basis)},
                  {"n", n},
                  {"phi_fixed", f.has_phi()}};
    s["level"] = num(f.level);
    json coefs = json::array();
    for (Index k = 0; k < fit.beta.size(); ++k) {
        const Interval ci = wald_ci(fit, k, f.level);
        coefs.push_back({{"name", fit.spec.column_names[static_cast<std::size_t>(k)]},
                         {"estimate", num(fit.beta(k))},
                         {"se", num(std::sqrt(std::max(fit.beta_cov(k, k), 0.0)))},
                         {"lower", num(ci.lower)},
                         {"upper", num(ci.upper)}});
    }
    s["coefficients"] = coefs;
    s["sigma2_eps"] = num(fit.sigma2_eps);
    s["sigma2_alpha"] = fit.spec.has_random() ? num(fit.sigma2_alpha) : json(nullptr);
    s["phi"] = num(fit.phi);
    s["loglik"] = num(fit.loglik);
    s["converged"] = fit.converged;
    if (fit.basis) {
        json labels = json::array();
        for (const auto& c : fit.basis->columns()) labels.push_back(c.label);
        s["basis_columns"] = labels;
        s["alpha"] = nums(blup_alpha(fit));
    }
    s["diagnostics"] = diagnostics_json(m, fit, resid, max_lag);

    json curves;
    curves["coordinate"] = m.coords.dim() == 1 ? json(m.coord_names.front()) : json(nullptr);
    curves["x"] = m.coords.dim() == 1 ? nums(m.coords.points().col(0)) : json(nullptr);
    curves["y"] = nums(m.y);
    curves["fitted"] = nums(fitted);
    json comps = json::array();
    for (const auto& [label, v] : components(fit)) comps.push_back({{"label", label}, {"values", nums(v)}});
    curves["components"] = comps;
    s["curves"] = curves;

    if (!output.empty()) {
        Table t;
        t.header = {"row"};
        t.header.insert(t.header.end(), m.coord_names.begin(), m.coord_names.end());
        t.header.insert(t.header.end(), {"y", "fitted", "eta", "residual"});
        for (Index i = 0; i < n; ++i) {
            std::vector<std::string> r{std::to_string(i + 1)};
            for (Index d = 0; d < m.coords.dim(); ++d) r.push_back(format_number(m.coords.points()(i, d)));
            for (double v : {m.y(i), fitted(i), eta(i), resid(i)}) r.push_back(format_number(v));
            t.add_row(std::move(r));
        }
        write_csv(output, t);
    }
    emit(summary, dump(s), out);
    return 0;
}

Table coords_table(const std::vector<std::string>& names, const Coordinates& c, const std::string& value_name,
                   const Vector& values) {
    Table t;
    t.header = names;
    t.header.push_back(value_name);
    for (Index i = 0; i < c.size(); ++i) {
        std::vector<std::string> r;
        for (Index d = 0; d < c.dim(); ++d) r.push_back(format_number(c.points()(i, d)));
        r.push_back(format_number(values(i)));
        t.add_row(std::move(r));
    }
    return t;
}

int cmd_predict(const ModelFlags& f, const std::string& grid_path, const std::string& output, std::ostream& out,
                std::ostream& err) {
    const Model m = build_model(f);
    const LmmFit fit = fit_model(m, err);
    const Table grid = read_csv(grid_path);
    const Coordinates at(grid.numeric(m.coord_names));
    const Vector pred = predict(fit, at, covariates_at(m, grid, at));
    emit(output, csv_text(coords_table(m.coord_names, at, "prediction", pred)), out);
    return 0;
}

// ---------------------------------------------------------------- probit

struct ProbitFlags {
    std::string input, y, x, coords = "s1,s2", knots, phi_grid, grid, output, summary;
    int iters = 2000, burn = 500, chains = 1;
    std::uint64_t seed = 1;
    double level = 0.95, fixed_sigma2 = 0.0;
    CLI::Option* fixed_opt = nullptr;
};

double quantile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

json draw_summary(const Vector& d, double level) {
    const double mean = d.mean();
    const double sd = d.size() > 1 ? std::sqrt((d.array() - mean).square().sum() / static_cast<double>(d.size() - 1)) : 0.0;
    std::vector<double> v(d.data(), d.data() + d.size());
    return {{"mean", num(mean)},
            {"sd", num(sd)},
            {"lower", num(quantile(v, 0.5 * (1.0 - level)))},
            {"upper", num(quantile(v, 0.5 * (1.0 + level)))}};
}

std::vector<double> parse_phi_grid(const std::string& text) {
    const auto parts = split_list(text, ':');
    if (parts.size() != 3) throw InvalidInput("--phi-grid expects LO:HI:N");
    const double lo = parse_number(parts[0], "--phi-grid LO");
    const double hi = parse_number(parts[1], "--phi-grid HI");
    const auto count = parse_integer(parts[2]);
    if (!count || *count < 1) throw InvalidInput("--phi-grid N must be a positive integer");
    if (!(lo > 0.0) || !(hi >= lo)) throw InvalidInput("--phi-grid needs 0 < LO <= HI");
    return linspace(lo, hi, static_cast<Index>(*count));
}

int cmd_fit_probit(const ProbitFlags& f, std::ostream& out) {
    const Table data = read_csv(f.input);
    const auto coord_names = column_list(f.coords, "--coords");
    const auto covariate_names = column_list(f.x, "--x");
    ProbitSpec spec;
    spec.coords = Coordinates(data.numeric(coord_names));
    spec.y = data.numeric(f.y);
    spec.x = with_intercept(data.numeric(covariate_names));
    spec.column_names = {"intercept"};
    spec.column_names.insert(spec.column_names.end(), covariate_names.begin(), covariate_names.end());
    if (!f.knots.empty()) spec.knots = parse_knots(f.knots, spec.coords, coord_names, 0);
    if (!f.phi_grid.empty()) spec.priors.phi_grid = parse_phi_grid(f.phi_grid);
    if (f.fixed_opt->count()) spec.priors.fixed_sigma2_alpha = f.fixed_sigma2;
    spec.validate();

    const int chains = f.chains;
    std::vector<PosteriorSamples> runs(static_cast<std::size_t>(chains));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chains));
#pragma omp parallel for schedule(static, 1)
    for (int c = 0; c < chains; ++c) {
        try {
            runs[static_cast<std::size_t>(c)] = gibbs_fit(spec, f.iters, f.burn, f.seed + static_cast<std::uint64_t>(c));
        } catch (...) {
            errors[static_cast<std::size_t>(c)] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    // Pool chains in index order so the summary does not depend on scheduling.
    const Index per = runs.front().retained();
    const Index total = per * chains;
    Matrix beta(total, spec.x.cols());
    Vector s2(total), phi(total);
    for (int c = 0; c < chains; ++c) {
        const auto& r = runs[static_cast<std::size_t>(c)];
        beta.middleRows(c * per, per) = r.beta_draws;
        s2.segment(c * per, per) = r.sigma2_alpha_draws;
        phi.segment(c * per, per) = r.phi_draws;
    }

    Coordinates at = spec.coords;
    Matrix at_x = spec.x;
    if (!f.grid.empty()) {
        const Table grid = read_csv(f.grid);
        at = Coordinates(grid.numeric(coord_names));
        at_x = with_intercept(grid.numeric(covariate_names));
    }
    Vector prob = Vector::Zero(at.size());
    for (const auto& r : runs) prob += posterior_predict(r, spec, at, at_x);
    prob /= static_cast<double>(chains);

    json s;
    s["command"] = "fit-probit";
    s["seed"] = f.seed;
    s["chains"] = chains;
    s["iters"] = f.iters;
    s["burn"] = f.burn;
    s["retained"] = total;
    s["n"] = spec.y.size();
    s["reduced_rank"] = spec.reduced_rank();
    s["knots"] = spec.knots ? json(spec.knots->size()) : json(nullptr);
    s["level"] = num(f.level);
    json coefs = json::array();
    for (Index k = 0; k < beta.cols(); ++k) {
        json c = draw_summary(beta.col(k), f.level);
        c["name"] = spec.column_names[static_cast<std::size_t>(k)];
        coefs.push_back(c);
    }
    s["coefficients"] = coefs;
    s["sigma2_alpha"] = draw_summary(s2, f.level);
    s["phi"] = draw_summary(phi, f.level);
    s["phi_grid"] = nums(Eigen::Map<const Vector>(runs.front().phi_grid.data(),
                                                  static_cast<Index>(runs.front().phi_grid.size())));
    std::int64_t violations = 0;
    json warnings = json::array();
    for (const auto& r : runs) {
        violations += r.truncation_violations;
        for (const auto& w : r.warnings) warnings.push_back(w);
    }
    s["truncation_violations"] = violations;
    s["warnings"] = warnings;
    s["prediction"] = {{"points", at.size()}, {"min", num(prob.minCoeff())}, {"max", num(prob.maxCoeff())}};

    if (!f.output.empty()) write_csv(f.output, coords_table(coord_names, at, "probability", prob));
    emit(f.summary, dump(s), out);
    return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateFlags {
    int n = 100, dim = 0;
    std::string model = "lmm", family, beta = "1,-0.5", output;
    double phi = 0.5, sigma2_eps = 1.0, sigma2_alpha = 1.0;
    std::uint64_t seed = 1;
};

int cmd_simulate(const SimulateFlags& f, std::ostream& out) {
    if (f.n < 2) throw InvalidInput("--n must be at least 2");
    const bool probit = f.model == "probit";
    const Family family = f.family.empty() ? (probit ? Family::exponential : Family::ar1) : parse_family(f.family);
    const CorrelationModel model(family, f.phi);
    model.validate();
    std::vector<double> b;
    for (const auto& s : split_list(f.beta)) b.push_back(parse_number(s, "--beta"));
    if (b.size() != 2) throw InvalidInput("--beta expects two values: intercept,slope");
    const Vector beta = Eigen::Map<const Vector>(b.data(), 2);
    const int dim = family == Family::ar1 ? 1 : (f.dim > 0 ? f.dim : (probit ? 2 : 1));
    if (dim > 2) throw InvalidInput("--dim must be 1 or 2");

    RandomStream s(f.seed);
    const Index n = f.n;
    Matrix pts(n, dim);
    std::vector<std::string> names;
    if (family == Family::ar1) {
        for (Index i = 0; i < n; ++i) pts(i, 0) = static_cast<double>(i + 1);
        names = {"t"};
    } else if (dim == 1) {
        std::vector<double> t(static_cast<std::size_t>(n));
        for (auto& v : t) v = s.next_uniform();
        std::sort(t.begin(), t.end());
        for (Index i = 0; i < n; ++i) pts(i, 0) = t[static_cast<std::size_t>(i)];
        names = {"t"};
    } else {
        for (Index i = 0; i < n; ++i) pts(i, 0) = s.next_uniform(), pts(i, 1) = s.next_uniform();
        names = {"s1", "s2"};
    }
    const Coordinates coords(pts);
    Matrix x(n, 2);
    for (Index i = 0; i < n; ++i) x.row(i) << 1.0, s.next_gaussian();

    Vector y;
    if (probit) {
        y = simulate_probit(x, beta, coords, f.sigma2_alpha, model, s);
    } else {
        if (!(f.sigma2_eps >= 0.0) || !(f.sigma2_alpha >= 0.0)) throw InvalidInput("variances must be non-negative");
        const SymMatrix r = corr_matrix(coords, model);
        y = x * beta + std::sqrt(f.sigma2_alpha) * draw_mvn(s, r);
        for (Index i = 0; i < n; ++i) y(i) += std::sqrt(f.sigma2_eps) * s.next_gaussian();
    }

    Table t;
    t.header = names;
    t.header.insert(t.header.end(), {"x1", "y"});
    for (Index i = 0; i < n; ++i) {
        std::vector<std::string> r;
        for (Index d = 0; d < dim; ++d) r.push_back(format_number(pts(i, d)));
        r.push_back(format_number(x(i, 1)));
        r.push_back(format_number(y(i)));
        t.add_row(std::move(r));
    }
    emit(f.output, csv_text(t), out);
    return 0;
}

// ---------------------------------------------------------------- decompose

struct DecomposeFlags {
    std::string input, coords = "t", family, output, summary;
    double phi = 0.0;
};

int cmd_decompose(const DecomposeFlags& f, std::ostream& out) {
    const Table data = read_csv(f.input);
    const Coordinates coords(data.numeric(column_list(f.coords, "--coords")));
    const CorrelationModel model(parse_family(f.family), f.phi);
    model.validate();
    const SymMatrix r = corr_matrix(coords, model);
    const EigenPair ep = sym_eigen(r);
    const BasisExpansion z = eigen_basis(coords, model);

    // Check the matrix as written, not the in-memory one.
    const Matrix printed = z.matrix().unaryExpr([](double v) { return round_to_printed(v); });
    const double recon = (printed * printed.transpose() - r.matrix()).cwiseAbs().maxCoeff();

    if (!f.output.empty()) {
        Table t;
        for (Index j = 0; j < z.cols(); ++j) t.header.push_back("z" + std::to_string(j + 1));
        for (Index i = 0; i < z.rows(); ++i) {
            std::vector<std::string> row;
            for (Index j = 0; j < z.cols(); ++j) row.push_back(format_number(printed(i, j)));
            t.add_row(std::move(row));
        }
        write_csv(f.output, t);
    }
    json s;
    s["command"] = "decompose";
    s["family"] = f.family;
    s["phi"] = num(f.phi);
    s["n"] = coords.size();
    s["eigenvalues"] = nums(ep.values);
    s["reconstruction_max_abs_diff"] = num(recon);
    emit(f.summary, dump(s), out);
    return 0;
}

// ---------------------------------------------------------------- plot

struct PlotFlags {
    std::string fit, output, components, title;
    int width = 800, height = 500;
};

std::string xml_escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        switch (c) {
        case '<': o += "&lt;"; break;
        case '>': o += "&gt;"; break;
        case '&': o += "&amp;"; break;
        case '"': o += "&quot;"; break;
        default: o += c;
        }
    }
    return o;
}

std::vector<double> number_array(const json& a, const char* what) {
    if (!a.is_array()) throw InvalidInput(std::string("fit summary lacks ") + what);
    std::vector<double> v;
    for (const auto& e : a) v.push_back(e.is_number() ? e.get<double>() : std::nan(""));
    return v;
}

int cmd_plot(const PlotFlags& f, std::ostream& out) {
    json s;
    try {
        s = json::parse(read_text(f.fit));
    } catch (const json::parse_error&) {
        throw InvalidInput("'" + f.fit + "' is not a JSON fit summary");
    }
    if (!s.contains("curves")) throw InvalidInput("'" + f.fit + "' has no curves; plot needs output of the fit command");
    const json& c = s["curves"];
    if (c["x"].is_null()) throw InvalidInput("plot needs a fit on 1-D coordinates");
    const auto x = number_array(c["x"], "x");
    const auto y = number_array(c["y"], "y");
    const auto fitted = number_array(c["fitted"], "fitted");
    std::vector<std::pair<std::string, std::vector<double>>> comps;
    for (const auto& e : c["components"]) comps.emplace_back(e["label"].get<std::string>(), number_array(e["values"], "values"));
    if (!f.components.empty()) {
        std::vector<std::pair<std::string, std::vector<double>>> chosen;
        for (const auto& item : split_list(f.components)) {
            const auto idx = parse_integer(item);
            if (!idx || *idx < 0 || *idx >= static_cast<long long>(comps.size()))
                throw InvalidInput("--components index '" + item + "' is out of range");
            chosen.push_back(comps[static_cast<std::size_t>(*idx)]);
        }
        comps = std::move(chosen);
    }
    const std::size_t n = x.size();
    if (n == 0 || y.size() != n || fitted.size() != n) throw InvalidInput("fit summary curves disagree in length");
    for (const auto& [l, v] : comps)
        if (v.size() != n) throw InvalidInput("component '" + l + "' has the wrong length");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

    auto range = [](double& lo, double& hi) {
        if (hi > lo) return;
        const double pad = lo == 0.0 ? 1.0 : 0.5 * std::abs(lo);
        lo -= pad;
        hi += pad;
    };
    double xlo = *std::min_element(x.begin(), x.end()), xhi = *std::max_element(x.begin(), x.end());
    double ylo = std::numeric_limits<double>::infinity(), yhi = -ylo;
    auto widen = [&](const std::vector<double>& v) {
        for (double e : v)
            if (std::isfinite(e)) ylo = std::min(ylo, e), yhi = std::max(yhi, e);
    };
    widen(y);
    widen(fitted);
    for (const auto& comp : comps) widen(comp.second);
    if (!std::isfinite(ylo)) ylo = yhi = 0.0;
    range(xlo, xhi);
    range(ylo, yhi);

    const double left = 70, right = 20, top = 40, bottom = 50;
    const double pw = f.width - left - right, ph = f.height - top - bottom;
    // The transform is rounded to its printed form so readers can invert it exactly.
    const double sx = round_to_printed(pw / (xhi - xlo));
    const double x0 = round_to_printed(left - xlo * sx);
    const double sy = round_to_printed(-ph / (yhi - ylo));
    const double y0 = round_to_printed(top + ph - ylo * sy);
    auto px = [&](double v) { return format_number(x0 + sx * v); };
    auto py = [&](double v) { return format_number(y0 + sy * v); };
    auto path = [&](const std::vector<double>& v) {
        std::string d;
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t i = order[k];
            d += (k ? " L" : "M") + px(x[i]) + "," + py(v[i]);
        }
        return d;
    };

    static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << f.width << "\" height=\""
        << f.height << "\" viewBox=\"0 0 " << f.width << " " << f.height << "\">\n";
    const std::string title = f.title.empty() ? "fitted curve and coefficient-scaled basis vectors" : f.title;
    svg << "<title>" << xml_escape(title) << "</title>\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"" << f.width << "\" height=\"" << f.height << "\" fill=\"white\"/>\n";
    svg << "<rect class=\"frame\" x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"#999999\"/>\n";
    svg << "<text x=\"" << left << "\" y=\"" << top - 15 << "\" font-family=\"sans-serif\" font-size=\"14\">"
        << xml_escape(title) << "</text>\n";
    const std::string xname = c["coordinate"].is_string() ? c["coordinate"].get<std::string>() : "x";
    svg << "<g class=\"axes\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">\n"
        << "<text x=\"" << left << "\" y=\"" << top + ph + 18 << "\">" << format_number(xlo) << "</text>\n"
        << "<text x=\"" << left + pw << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"end\">" << format_number(xhi)
        << "</text>\n"
        << "<text x=\"" << left + pw / 2 << "\" y=\"" << top + ph + 38 << "\" text-anchor=\"middle\">"
        << xml_escape(xname) << "</text>\n"
        << "<text x=\"" << left - 6 << "\" y=\"" << top + ph << "\" text-anchor=\"end\">" << format_number(ylo)
        << "</text>\n"
        << "<text x=\"" << left - 6 << "\" y=\"" << top + 10 << "\" text-anchor=\"end\">" << format_number(yhi)
        << "</text>\n</g>\n";
    svg << "<g class=\"plot\" data-x0=\"" << format_number(x0) << "\" data-sx=\"" << format_number(sx)
        << "\" data-y0=\"" << format_number(y0) << "\" data-sy=\"" << format_number(sy) << "\">\n";
    svg << "<g class=\"data\" fill=\"#444444\">\n";
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = order[k];
        if (std::isfinite(y[i])) svg << "<circle cx=\"" << px(x[i]) << "\" cy=\"" << py(y[i]) << "\" r=\"2.5\"/>\n";
    }
    svg << "</g>\n";
    for (std::size_t j = 0; j < comps.size(); ++j)
        svg << "<path class=\"component\" data-label=\"" << xml_escape(comps[j].first) << "\" fill=\"none\" stroke=\""
            << palette[j % 10] << "\" stroke-width=\"1\" d=\"" << path(comps[j].second) << "\"/>\n";
    svg << "<path class=\"fitted\" fill=\"none\" stroke=\"black\" stroke-width=\"2\" d=\"" << path(fitted) << "\"/>\n";
    svg << "</g>\n</svg>\n";
    emit(f.output, svg.str(), out);
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Basis-function models of autocorrelation", "autobasis"};
    app.require_subcommand(1);

    SimulateFlags sim;
    auto* simulate = app.add_subcommand("simulate", "draw a synthetic data set");
    simulate->add_option("--n", sim.n, "number of observations")->capture_default_str();
    simulate->add_option("--model", sim.model)->check(CLI::IsMember({"lmm", "probit"}))->capture_default_str();
    simulate->add_option("--family", sim.family, "default ar1, or exponential for --model probit")
        ->check(CLI::IsMember({"ar1", "gaussian", "exponential"}));
    simulate->add_option("--phi", sim.phi)->capture_default_str();
    simulate->add_option("--seed", sim.seed)->capture_default_str();
    simulate->add_option("--beta", sim.beta, "intercept,slope")->capture_default_str();
    simulate->add_option("--sigma2-eps", sim.sigma2_eps)->capture_default_str();
    simulate->add_option("--sigma2-alpha", sim.sigma2_alpha)->capture_default_str();
    simulate->add_option("--dim", sim.dim, "coordinate dimension for gaussian/exponential (1 or 2)");
    simulate->add_option("--output", sim.output, "CSV path (stdout when omitted)");

    DecomposeFlags dec;
    auto* decompose = app.add_subcommand("decompose", "eigen basis of a correlation matrix");
    decompose->add_option("--input", dec.input, "coordinates CSV")->required();
    decompose->add_option("--coords", dec.coords)->capture_default_str();
    decompose->add_option("--family", dec.family)->required()->check(CLI::IsMember({"ar1", "gaussian", "exponential"}));
    decompose->add_option("--phi", dec.phi)->required();
    decompose->add_option("--output", dec.output, "CSV path for Z");
    decompose->add_option("--summary", dec.summary, "JSON path (stdout when omitted)");

    ModelFlags fit_flags;
    std::string fit_output, fit_summary;
    auto* fit = app.add_subcommand("fit", "maximum-likelihood linear mixed model");
    add_model_flags(*fit, fit_flags);
    fit->add_option("--output", fit_output, "CSV path for fitted values");
    fit->add_option("--summary", fit_summary, "JSON path (stdout when omitted)");

    ModelFlags pred_flags;
    std::string pred_grid, pred_output;
    auto* pred = app.add_subcommand("predict", "refit, then predict at new coordinates");
    add_model_flags(*pred, pred_flags);
    pred->add_option("--grid", pred_grid, "CSV with the coordinate and covariate columns")->required();
    pred->add_option("--output", pred_output, "CSV path (stdout when omitted)");

    ProbitFlags pf;
    auto* probit = app.add_subcommand("fit-probit", "Bayesian spatial probit regression");
    probit->add_option("--input", pf.input)->required();
    probit->add_option("--y", pf.y, "binary response column")->required();
    probit->add_option("--x", pf.x, "covariate columns (intercept is added)");
    probit->add_option("--coords", pf.coords)->capture_default_str();
    probit->add_option("--knots", pf.knots, "predictive-process knots: count, comma list or CSV path");
    probit->add_option("--phi-grid", pf.phi_grid, "LO:HI:N");
    probit->add_option("--iters", pf.iters)->capture_default_str()->check(CLI::PositiveNumber);
    probit->add_option("--burn", pf.burn)->capture_default_str()->check(CLI::NonNegativeNumber);
    probit->add_option("--seed", pf.seed)->capture_default_str();
    probit->add_option("--chains", pf.chains)->capture_default_str()->check(CLI::Range(1, 64));
    probit->add_option("--level", pf.level)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    pf.fixed_opt = probit->add_option("--fix-sigma2-alpha", pf.fixed_sigma2, "pin sigma2_alpha (0 drops the effect)")
                       ->check(CLI::NonNegativeNumber);
    probit->add_option("--grid", pf.grid, "prediction points CSV (training sites when omitted)");
    probit->add_option("--output", pf.output, "CSV path for predicted probabilities");
    probit->add_option("--summary", pf.summary, "JSON path (stdout when omitted)");

    PlotFlags pl;
    auto* plot = app.add_subcommand("plot", "SVG of a fit: data, fitted curve and basis curves");
    plot->add_option("--fit", pl.fit, "JSON summary written by fit")->required()->check(CLI::ExistingFile);
    plot->add_option("--output", pl.output, "SVG path (stdout when omitted)");
    plot->add_option("--components", pl.components, "component indices to draw (default all)");
    plot->add_option("--title", pl.title);
    plot->add_option("--width", pl.width)->capture_default_str()->check(CLI::Range(200, 4000));
    plot->add_option("--height", pl.height)->capture_default_str()->check(CLI::Range(150, 4000));

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*simulate) return cmd_simulate(sim, out);
        if (*decompose) return cmd_decompose(dec, out);
        if (*fit) return cmd_fit(fit_flags, fit_output, fit_summary, out, err);
        if (*pred) return cmd_predict(pred_flags, pred_grid, pred_output, out, err);
        if (*probit) {
            if (pf.burn >= pf.iters) throw InvalidInput("--burn must be smaller than --iters");
            return cmd_fit_probit(pf, out);
        }
        if (*plot) return cmd_plot(pl, out);
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return 4;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        err << "error: malformed fit summary: " << e.what() << "\n";
        return 2;
    }
    return 2;
}

}  // namespace autobasis::cli
