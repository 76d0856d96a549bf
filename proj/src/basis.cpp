#include "autobasis/basis.hpp"

#include <cmath>
#include <unordered_map>

#include "autobasis/error.hpp"

namespace autobasis {

std::string_view to_string(BasisKind k) {
    switch (k) {
        case BasisKind::polynomial_power: return "polynomial-power";
        case BasisKind::shifted_quadratic: return "shifted-quadratic";
        case BasisKind::eigen: return "eigen";
        case BasisKind::gaussian_kernel: return "gaussian-kernel";
        case BasisKind::uniform_kernel: return "uniform-kernel";
        case BasisKind::group_indicator: return "group-indicator";
        case BasisKind::predictive_process: return "predictive-process";
    }
    return "?";
}

BasisExpansion::BasisExpansion(Matrix z, std::vector<BasisColumn> columns, CoefficientCovariance cov,
                               Matrix cov_payload, Evaluator evaluator)
    : z_(std::move(z)),
      columns_(std::move(columns)),
      cov_(cov),
      payload_(std::move(cov_payload)),
      evaluator_(std::move(evaluator)) {
    if (z_.cols() < 1) throw InvalidInput("basis expansion needs at least one column");
    if (!z_.allFinite()) throw InvalidInput("basis expansion has non-finite entries");
    if (static_cast<Index>(columns_.size()) != z_.cols()) {
        throw ContractViolation("basis column metadata does not match the matrix");
    }
    const Index m = z_.cols();
    switch (cov_) {
        case CoefficientCovariance::iid: break;
        case CoefficientCovariance::eigen_weighted:
            if (payload_.size() != m) throw ContractViolation("eigen weights must have one entry per column");
            payload_.resize(m, 1);
            break;
        case CoefficientCovariance::knot_correlated:
            if (payload_.rows() != m || payload_.cols() != m) {
                throw ContractViolation("knot correlation must be m x m");
            }
            break;
    }
}

Matrix BasisExpansion::coefficient_cov_matrix() const {
    const Index m = cols();
    switch (cov_) {
        case CoefficientCovariance::iid: return Matrix::Identity(m, m);
        case CoefficientCovariance::eigen_weighted: return payload_.col(0).asDiagonal();
        case CoefficientCovariance::knot_correlated: return payload_;
    }
    return {};
}

Vector BasisExpansion::eigen_weights() const {
    if (cov_ != CoefficientCovariance::eigen_weighted) {
        throw ContractViolation("basis does not carry eigen weights");
    }
    return payload_.col(0);
}

Matrix BasisExpansion::evaluate(const Coordinates& at) const {
    if (!evaluator_) {
        throw InvalidInput(std::string(to_string(columns_.front().kind)) +
                           " basis cannot be evaluated at new coordinates");
    }
    return evaluator_(at);
}

namespace {

constexpr int max_degree = 10;

double xpow(double x, int k) {
    double v = 1.0;
    for (int i = 0; i < k; ++i) v *= x;
    return v;
}

Vector as_line(const Coordinates& c) {
    if (c.dim() != 1) throw InvalidInput("this basis is defined on 1-D coordinates");
    return c.points().col(0);
}

void require_distinct(const Coordinates& knots) {
    if (knots.size() < 1) throw InvalidKnots("knot set is empty");
    for (Index i = 0; i < knots.size(); ++i)
        for (Index j = i + 1; j < knots.size(); ++j)
            if (knots.distance(i, knots, j) == 0.0) throw InvalidKnots("knots must be pairwise distinct");
}

std::vector<BasisColumn> knotted_columns(BasisKind kind, const Coordinates& knots, double param) {
    std::vector<BasisColumn> cols;
    cols.reserve(static_cast<std::size_t>(knots.size()));
    for (Index j = 0; j < knots.size(); ++j) {
        cols.push_back({kind, std::string(to_string(kind)) + "_" + std::to_string(j + 1),
                        Vector(knots.point(j).transpose()), std::nullopt, param});
    }
    return cols;
}

Matrix polynomial_matrix(const Vector& x, int degree) {
    Matrix z(x.size(), degree + 1);
    for (Index i = 0; i < x.size(); ++i)
        for (int k = 0; k <= degree; ++k) z(i, k) = xpow(x(i), k);
    return z;
}

Matrix shifted_quadratic_matrix(const Vector& x, const Vector& knots) {
    Matrix z(x.size(), knots.size());
    for (Index i = 0; i < x.size(); ++i)
        for (Index j = 0; j < knots.size(); ++j) {
            const double d = x(i) - knots(j);
            z(i, j) = d * d;
        }
    return z;
}

struct Spectral {
    Matrix q;
    Vector lambda;  // clamped
};

Spectral clamped_spectrum(const SymMatrix& r) {
    EigenPair ep = sym_eigen(r);
    const double lmax = ep.values(0);
    if (!(lmax > 0.0)) throw NotPsd("correlation matrix has no positive eigenvalue");
    for (Index k = 0; k < ep.values.size(); ++k) {
        double& v = ep.values(k);
        if (v < -1e-8 * lmax) throw NotPsd("matrix is not positive semi-definite (eigenvalue " + std::to_string(v) + ")");
        if (v < 1e-12 * lmax) v = 0.0;
    }
    return {std::move(ep.vectors), std::move(ep.values)};
}

std::vector<BasisColumn> eigen_columns(Index m, std::optional<double> phi) {
    std::vector<BasisColumn> cols;
    for (Index k = 0; k < m; ++k)
        cols.push_back({BasisKind::eigen, "eigen_" + std::to_string(k + 1), std::nullopt, std::nullopt, phi});
    return cols;
}

// Extends an eigen basis off the training points through the correlation
// function: z(s) = c(s)' Q diag(w). At a training point this reproduces row i.
BasisExpansion::Evaluator eigen_extension(const Coordinates& coords, const CorrelationModel& model,
                                          const Matrix& q, const Vector& weights) {
    Matrix proj = q * weights.asDiagonal();
    return [coords, model, proj = std::move(proj)](const Coordinates& at) -> Matrix {
        return cross_corr_matrix(at, coords, model) * proj;
    };
}

}  // namespace

BasisExpansion polynomial_basis(const Vector& x, int degree) {
    if (degree < 0 || degree > max_degree) {
        throw UnsupportedDegree("polynomial degree must be in [0, 10], got " + std::to_string(degree));
    }
    if (!x.allFinite()) throw InvalidInput("polynomial basis input must be finite");
    std::vector<BasisColumn> cols;
    for (int k = 0; k <= degree; ++k)
        cols.push_back({BasisKind::polynomial_power, "x^" + std::to_string(k), std::nullopt,
                        static_cast<double>(k), std::nullopt});
    return BasisExpansion(polynomial_matrix(x, degree), std::move(cols), CoefficientCovariance::iid, {},
                          [degree](const Coordinates& at) { return polynomial_matrix(as_line(at), degree); });
}

BasisExpansion shifted_quadratic_basis(const Vector& x, const Vector& knots) {
    if (knots.size() < 3) throw InvalidKnots("shifted quadratic basis needs at least three knots");
    for (Index i = 0; i < knots.size(); ++i)
        for (Index j = i + 1; j < knots.size(); ++j)
            if (knots(i) == knots(j)) throw InvalidKnots("shifted quadratic knots must be distinct");
    if (!x.allFinite() || !knots.allFinite()) throw InvalidInput("shifted quadratic inputs must be finite");
    std::vector<BasisColumn> cols;
    for (Index j = 0; j < knots.size(); ++j)
        cols.push_back({BasisKind::shifted_quadratic, "(x-k" + std::to_string(j + 1) + ")^2",
                        Vector::Constant(1, knots(j)), 2.0, std::nullopt});
    return BasisExpansion(shifted_quadratic_matrix(x, knots), std::move(cols), CoefficientCovariance::iid, {},
                          [knots](const Coordinates& at) { return shifted_quadratic_matrix(as_line(at), knots); });
}

BasisExpansion eigen_basis(const SymMatrix& r) {
    const Spectral s = clamped_spectrum(r);
    Matrix z = s.q * s.lambda.cwiseSqrt().asDiagonal();
    return BasisExpansion(std::move(z), eigen_columns(r.order(), std::nullopt));
}

BasisExpansion eigen_basis(const Coordinates& coords, const CorrelationModel& model) {
    const Spectral s = clamped_spectrum(corr_matrix(coords, model));
    Matrix z = s.q * s.lambda.cwiseSqrt().asDiagonal();
    const Vector w = s.lambda.unaryExpr([](double v) { return v > 0.0 ? 1.0 / std::sqrt(v) : 0.0; });
    return BasisExpansion(std::move(z), eigen_columns(coords.size(), model.phi), CoefficientCovariance::iid, {},
                          eigen_extension(coords, model, s.q, w));
}

BasisExpansion eigenvector_basis(const SymMatrix& r) {
    Spectral s = clamped_spectrum(r);
    return BasisExpansion(s.q, eigen_columns(r.order(), std::nullopt), CoefficientCovariance::eigen_weighted,
                          s.lambda);
}

BasisExpansion eigenvector_basis(const Coordinates& coords, const CorrelationModel& model) {
    Spectral s = clamped_spectrum(corr_matrix(coords, model));
    const Vector w = s.lambda.unaryExpr([](double v) { return v > 0.0 ? 1.0 / v : 0.0; });
    auto eval = eigen_extension(coords, model, s.q, w);
    return BasisExpansion(s.q, eigen_columns(coords.size(), model.phi), CoefficientCovariance::eigen_weighted,
                          s.lambda, std::move(eval));
}

Matrix gaussian_kernel_matrix(const Coordinates& coords, const Coordinates& knots, double phi) {
    if (coords.dim() != knots.dim()) throw InvalidInput("coordinate dimensionality mismatch");
    Matrix z(coords.size(), knots.size());
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < coords.size(); ++i)
        for (Index j = 0; j < knots.size(); ++j) {
            const double d = coords.distance(i, knots, j);
            z(i, j) = std::exp(-2.0 * d * d / phi);
        }
    return z;
}

Matrix uniform_kernel_matrix(const Coordinates& coords, const Coordinates& knots, double bandwidth) {
    if (coords.dim() != knots.dim()) throw InvalidInput("coordinate dimensionality mismatch");
    const double half = 0.5 * bandwidth;
    Matrix z(coords.size(), knots.size());
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < coords.size(); ++i)
        for (Index j = 0; j < knots.size(); ++j) z(i, j) = coords.distance(i, knots, j) <= half ? 1.0 : 0.0;
    return z;
}

namespace serial {

Matrix gaussian_kernel_matrix(const Coordinates& coords, const Coordinates& knots, double phi) {
    if (coords.dim() != knots.dim()) throw InvalidInput("coordinate dimensionality mismatch");
    Matrix z(coords.size(), knots.size());
    for (Index i = 0; i < coords.size(); ++i)
        for (Index j = 0; j < knots.size(); ++j) {
            const double d = coords.distance(i, knots, j);
            z(i, j) = std::exp(-2.0 * d * d / phi);
        }
    return z;
}

Matrix uniform_kernel_matrix(const Coordinates& coords, const Coordinates& knots, double bandwidth) {
    if (coords.dim() != knots.dim()) throw InvalidInput("coordinate dimensionality mismatch");
    const double half = 0.5 * bandwidth;
    Matrix z(coords.size(), knots.size());
    for (Index i = 0; i < coords.size(); ++i)
        for (Index j = 0; j < knots.size(); ++j) z(i, j) = coords.distance(i, knots, j) <= half ? 1.0 : 0.0;
    return z;
}

}  // namespace serial

BasisExpansion gaussian_kernel_basis(const Coordinates& coords, const Coordinates& knots, double phi) {
    if (!(phi > 0.0) || !std::isfinite(phi)) throw InvalidInput("gaussian kernel requires phi > 0");
    if (knots.size() < 1) throw InvalidKnots("gaussian kernel basis needs at least one knot");
    return BasisExpansion(gaussian_kernel_matrix(coords, knots, phi),
                          knotted_columns(BasisKind::gaussian_kernel, knots, phi), CoefficientCovariance::iid, {},
                          [knots, phi](const Coordinates& at) { return gaussian_kernel_matrix(at, knots, phi); });
}

BasisExpansion uniform_kernel_basis(const Coordinates& coords, const Coordinates& knots, double bandwidth) {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw InvalidInput("uniform kernel requires bandwidth > 0");
    if (knots.size() < 1) throw InvalidKnots("uniform kernel basis needs at least one knot");
    return BasisExpansion(
        uniform_kernel_matrix(coords, knots, bandwidth), knotted_columns(BasisKind::uniform_kernel, knots, bandwidth),
        CoefficientCovariance::iid, {},
        [knots, bandwidth](const Coordinates& at) { return uniform_kernel_matrix(at, knots, bandwidth); });
}

BasisExpansion grouping_basis(const std::vector<std::string>& labels) {
    if (labels.empty()) throw InvalidInput("grouping basis needs at least one label");
    std::unordered_map<std::string, Index> index;
    std::vector<std::string> order;
    for (const auto& l : labels) {
        if (index.emplace(l, static_cast<Index>(order.size())).second) order.push_back(l);
    }
    Matrix z = Matrix::Zero(static_cast<Index>(labels.size()), static_cast<Index>(order.size()));
    for (std::size_t i = 0; i < labels.size(); ++i) z(static_cast<Index>(i), index.at(labels[i])) = 1.0;
    std::vector<BasisColumn> cols;
    for (const auto& l : order)
        cols.push_back({BasisKind::group_indicator, l, std::nullopt, std::nullopt, std::nullopt});
    return BasisExpansion(std::move(z), std::move(cols));
}

BasisExpansion predictive_process_basis(const Coordinates& coords, const Coordinates& knots,
                                        const CorrelationModel& model) {
    require_distinct(knots);
    const SymMatrix rstar = corr_matrix(knots, model);
    const Matrix c = cross_corr_matrix(coords, knots, model);
    // Z = C R*^{-1}  <=>  R* Z' = C'
    Matrix z = spd_solve(rstar, c.transpose(), "R*").x.transpose();
    auto eval = [knots, model, rstar](const Coordinates& at) -> Matrix {
        return spd_solve(rstar, cross_corr_matrix(at, knots, model).transpose(), "R*").x.transpose();
    };
    return BasisExpansion(std::move(z), knotted_columns(BasisKind::predictive_process, knots, model.phi),
                          CoefficientCovariance::knot_correlated, rstar.matrix(), std::move(eval));
}

SymMatrix gram(const BasisExpansion& z) {
    const Matrix& m = z.matrix();
    switch (z.coefficient_covariance()) {
        case CoefficientCovariance::iid: return SymMatrix::symmetrize(m * m.transpose());
        case CoefficientCovariance::eigen_weighted:
            return SymMatrix::symmetrize(m * z.eigen_weights().asDiagonal() * m.transpose());
        case CoefficientCovariance::knot_correlated:
            return SymMatrix::symmetrize(m * z.coefficient_cov_matrix() * m.transpose());
    }
    return {};
}

}  // namespace autobasis
