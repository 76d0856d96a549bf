#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "autobasis/corr.hpp"
#include "autobasis/numkernel.hpp"

namespace autobasis {

enum class BasisKind {
    polynomial_power,
    shifted_quadratic,
    eigen,
    gaussian_kernel,
    uniform_kernel,
    group_indicator,
    predictive_process,
};

std::string_view to_string(BasisKind k);

/// Distribution of the basis coefficients alpha, up to the scale sigma2_alpha.
enum class CoefficientCovariance {
    iid,             // I
    eigen_weighted,  // diag(lambda)
    knot_correlated, // R*(phi)
};

struct BasisColumn {
    BasisKind kind;
    std::string label;
    std::optional<Vector> knot;   // anchor location, for knotted kinds
    std::optional<double> power;  // polynomial power
    std::optional<double> phi;    // kernel / correlation parameter, or bandwidth
};

/// An n x m basis matrix Z with per-column metadata and the covariance of
/// its coefficients. Immutable once built.
class BasisExpansion {
public:
    using Evaluator = std::function<Matrix(const Coordinates&)>;

    BasisExpansion(Matrix z, std::vector<BasisColumn> columns,
                   CoefficientCovariance cov = CoefficientCovariance::iid, Matrix cov_payload = {},
                   Evaluator evaluator = {});

    Index rows() const noexcept { return z_.rows(); }
    Index cols() const noexcept { return z_.cols(); }
    const Matrix& matrix() const noexcept { return z_; }
    const std::vector<BasisColumn>& columns() const noexcept { return columns_; }

    CoefficientCovariance coefficient_covariance() const noexcept { return cov_; }
    /// m x m coefficient covariance K (identity, diag(lambda) or R*).
    Matrix coefficient_cov_matrix() const;
    /// Lambda for eigen-weighted bases.
    Vector eigen_weights() const;

    /// Basis functions evaluated at new coordinates (rows = new points).
    bool can_evaluate() const noexcept { return static_cast<bool>(evaluator_); }
    Matrix evaluate(const Coordinates& at) const;

private:
    Matrix z_;
    std::vector<BasisColumn> columns_;
    CoefficientCovariance cov_;
    Matrix payload_;
    Evaluator evaluator_;
};

/// Columns x^0 .. x^degree. degree > 10 throws UnsupportedDegree.
BasisExpansion polynomial_basis(const Vector& x, int degree);

/// Column j = (x - k_j)^2. Needs at least three pairwise distinct knots.
BasisExpansion shifted_quadratic_basis(const Vector& x, const Vector& knots);

/// Z = Q Lambda^{1/2} with iid coefficients, so that Z Z' = R.
/// Eigenvalues under 1e-12 * lambda_max are clamped to zero; any below
/// -1e-8 * lambda_max throw NotPsd.
BasisExpansion eigen_basis(const SymMatrix& r);
/// As above, built from R(phi) on coords and able to evaluate at new points.
BasisExpansion eigen_basis(const Coordinates& coords, const CorrelationModel& model);

/// Z = Q with coefficients ~ N(0, sigma2 Lambda).
BasisExpansion eigenvector_basis(const SymMatrix& r);
BasisExpansion eigenvector_basis(const Coordinates& coords, const CorrelationModel& model);

/// z_ij = exp(-2 d_ij^2 / phi).
BasisExpansion gaussian_kernel_basis(const Coordinates& coords, const Coordinates& knots, double phi);

/// z_ij = 1 when d_ij <= bandwidth / 2, else 0.
BasisExpansion uniform_kernel_basis(const Coordinates& coords, const Coordinates& knots,
                                    double bandwidth);

/// One indicator column per distinct label, in order of first appearance.
BasisExpansion grouping_basis(const std::vector<std::string>& labels);

/// Z = C(phi) R*(phi)^{-1} with coefficients ~ N(0, sigma2 R*(phi)).
BasisExpansion predictive_process_basis(const Coordinates& coords, const Coordinates& knots,
                                        const CorrelationModel& model);

/// Implied correlation Z K Z'.
SymMatrix gram(const BasisExpansion& z);

namespace serial {

Matrix gaussian_kernel_matrix(const Coordinates& coords, const Coordinates& knots, double phi);
Matrix uniform_kernel_matrix(const Coordinates& coords, const Coordinates& knots, double bandwidth);

}  // namespace serial

Matrix gaussian_kernel_matrix(const Coordinates& coords, const Coordinates& knots, double phi);
Matrix uniform_kernel_matrix(const Coordinates& coords, const Coordinates& knots, double bandwidth);

}  // namespace autobasis
