#include "autobasis/corr.hpp"

#include <algorithm>
#include <cmath>

#include "autobasis/error.hpp"

namespace autobasis {

std::string_view to_string(Family f) {
    switch (f) {
        case Family::ar1: return "ar1";
        case Family::gaussian: return "gaussian";
        case Family::exponential: return "exponential";
    }
    return "?";
}

Family parse_family(std::string_view name) {
    if (name == "ar1") return Family::ar1;
    if (name == "gaussian") return Family::gaussian;
    if (name == "exponential") return Family::exponential;
    throw InvalidInput("unknown correlation family '" + std::string(name) + "'");
}

CorrelationModel::CorrelationModel(Family f, double p) : family(f), phi(p) { validate(); }

void CorrelationModel::validate() const {
    if (!std::isfinite(phi)) throw InvalidInput("correlation parameter must be finite");
    if (family == Family::ar1) {
        if (!(phi > -1.0 && phi < 1.0)) throw InvalidInput("ar1 requires -1 < phi < 1");
    } else if (!(phi > 0.0)) {
        throw InvalidInput(std::string(to_string(family)) + " requires phi > 0");
    }
}

Coordinates::Coordinates(Matrix points) : points_(std::move(points)) {
    if (points_.cols() < 1) throw InvalidInput("coordinates need at least one dimension");
    if (!points_.allFinite()) throw InvalidInput("coordinates must be finite");
}

Coordinates::Coordinates(const std::vector<double>& line)
    : Coordinates(Matrix(Eigen::Map<const Vector>(line.data(), static_cast<Index>(line.size())))) {}

double Coordinates::distance(Index i, const Coordinates& other, Index j) const {
    if (dim() == 1) return std::abs(points_(i, 0) - other.points_(j, 0));
    return (points_.row(i) - other.points_.row(j)).norm();
}

double Coordinates::max_distance() const {
    double best = 0.0;
    for (Index i = 0; i < size(); ++i)
        for (Index j = i + 1; j < size(); ++j) best = std::max(best, distance(i, *this, j));
    return best;
}

double corr_value(double d, const CorrelationModel& model) {
    if (!(d >= 0.0)) throw InvalidInput("distance must be non-negative");
    switch (model.family) {
        case Family::gaussian: return std::exp(-d * d / model.phi);
        case Family::exponential: return std::exp(-d / model.phi);
        case Family::ar1:
            if (model.phi < 0.0 && d != std::floor(d)) {
                throw InvalidInput("ar1 with negative phi needs integer lags");
            }
            return std::pow(model.phi, d);
    }
    return 0.0;
}

namespace {

void check_dims(const Coordinates& a, const Coordinates& b) {
    if (a.dim() != b.dim()) throw InvalidInput("coordinate dimensionality mismatch");
}

}  // namespace

SymMatrix corr_matrix(const Coordinates& coords, const CorrelationModel& model) {
    model.validate();
    const Index n = coords.size();
    if (n < 1) throw InvalidInput("corr_matrix needs at least one point");
    // corr_value may throw for negative ar1 phi; exceptions cannot leave an omp region.
    if (model.family == Family::ar1 && model.phi < 0.0) return serial::corr_matrix(coords, model);
    Matrix r(n, n);
#pragma omp parallel for schedule(dynamic, 16)
    for (Index i = 0; i < n; ++i) {
        r(i, i) = 1.0;
        for (Index j = i + 1; j < n; ++j) {
            const double v = corr_value(coords.distance(i, coords, j), model);
            r(i, j) = v;
            r(j, i) = v;
        }
    }
    return SymMatrix(std::move(r));
}

Matrix cross_corr_matrix(const Coordinates& coords, const Coordinates& knots,
                         const CorrelationModel& model) {
    model.validate();
    check_dims(coords, knots);
    const Index n = coords.size();
    const Index m = knots.size();
    if (model.family == Family::ar1 && model.phi < 0.0) return serial::cross_corr_matrix(coords, knots, model);
    Matrix c(n, m);
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < m; ++j) c(i, j) = corr_value(coords.distance(i, knots, j), model);
    return c;
}

std::vector<double> linspace(double lo, double hi, Index count) {
    if (count < 1) throw InvalidInput("linspace needs count >= 1");
    std::vector<double> out(static_cast<std::size_t>(count));
    if (count == 1) {
        out[0] = 0.5 * (lo + hi);
        return out;
    }
    const double step = (hi - lo) / static_cast<double>(count - 1);
    for (Index k = 0; k < count; ++k) out[static_cast<std::size_t>(k)] = lo + step * static_cast<double>(k);
    out.back() = hi;
    return out;
}

Coordinates default_knots(const Coordinates& coords, Index count) {
    if (count < 1) throw InvalidKnots("knot count must be at least 1");
    if (coords.size() < 1) throw InvalidInput("cannot place knots without data");
    const Vector lo = coords.points().colwise().minCoeff();
    const Vector hi = coords.points().colwise().maxCoeff();
    if (coords.dim() == 1) return Coordinates(linspace(lo(0), hi(0), count));
    if (coords.dim() != 2) throw InvalidInput("default knot grids support 1-D and 2-D data only");

    // Most-square factorization; primes fall back to a ceil(sqrt) grid that is trimmed.
    Index a = 1;
    for (Index f = 1; f * f <= count; ++f)
        if (count % f == 0) a = f;
    Index b = count / a;
    if (a == 1 && count > 3) {
        a = static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(count))));
        b = (count + a - 1) / a;
    }
    // More knots along the longer side.
    const bool x_longer = (hi(0) - lo(0)) >= (hi(1) - lo(1));
    const Index nx = x_longer ? std::max(a, b) : std::min(a, b);
    const Index ny = x_longer ? std::min(a, b) : std::max(a, b);
    const auto xs = linspace(lo(0), hi(0), nx);
    const auto ys = linspace(lo(1), hi(1), ny);
    Matrix pts(count, 2);
    Index k = 0;
    for (Index iy = 0; iy < ny && k < count; ++iy)
        for (Index ix = 0; ix < nx && k < count; ++ix, ++k) {
            pts(k, 0) = xs[static_cast<std::size_t>(ix)];
            pts(k, 1) = ys[static_cast<std::size_t>(iy)];
        }
    return Coordinates(std::move(pts));
}

namespace serial {

SymMatrix corr_matrix(const Coordinates& coords, const CorrelationModel& model) {
    model.validate();
    const Index n = coords.size();
    if (n < 1) throw InvalidInput("corr_matrix needs at least one point");
    Matrix r(n, n);
    for (Index i = 0; i < n; ++i) {
        r(i, i) = 1.0;
        for (Index j = i + 1; j < n; ++j) {
            const double v = corr_value(coords.distance(i, coords, j), model);
            r(i, j) = v;
            r(j, i) = v;
        }
    }
    return SymMatrix(std::move(r));
}

Matrix cross_corr_matrix(const Coordinates& coords, const Coordinates& knots,
                         const CorrelationModel& model) {
    model.validate();
    check_dims(coords, knots);
    Matrix c(coords.size(), knots.size());
    for (Index i = 0; i < coords.size(); ++i)
        for (Index j = 0; j < knots.size(); ++j) c(i, j) = corr_value(coords.distance(i, knots, j), model);
    return c;
}

}  // namespace serial

}  // namespace autobasis
