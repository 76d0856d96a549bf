#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "autobasis/basis.hpp"
#include "autobasis/corr.hpp"
#include "autobasis/error.hpp"
#include "autobasis/numkernel.hpp"

namespace autobasis {

/// Variance components and correlation parameter of a Gaussian mixed model.
struct Theta {
    double sigma2_eps = 1.0;
    double sigma2_alpha = 1.0;
    std::optional<double> phi;
};

/// Plain linear model: Sigma = sigma2_eps I.
struct NoRandom {};

/// Random effect in the covariance: Sigma = sigma2_eps I + sigma2_alpha R(phi).
struct SecondOrder {
    Family family = Family::exponential;
    std::optional<double> fixed_phi;  // skip phi estimation when set
};

/// Random effect in the mean, Z alpha. The basis is either fixed or rebuilt
/// for each candidate phi (eigen, kernel and predictive-process bases).
struct FirstOrder {
    std::function<BasisExpansion(double phi)> build;
    std::optional<Family> phi_family;  // search bounds for phi; unset for fixed bases
    std::optional<double> fixed_phi;
    std::shared_ptr<const BasisExpansion> fixed_basis;

    static FirstOrder fixed(BasisExpansion basis);
    static FirstOrder parametric(Family bounds_family, std::function<BasisExpansion(double)> build);

    bool depends_on_phi() const noexcept { return !fixed_basis; }
    BasisExpansion at(std::optional<double> phi) const;
};

using RandomEffect = std::variant<NoRandom, SecondOrder, FirstOrder>;

FirstOrder first_order_eigen(const Coordinates& coords, Family family);
FirstOrder first_order_gaussian_kernel(const Coordinates& coords, const Coordinates& knots);
FirstOrder first_order_predictive_process(const Coordinates& coords, const Coordinates& knots, Family family);

struct LmmSpec {
    Matrix x;
    std::vector<std::string> column_names;
    Coordinates coords;
    RandomEffect random = NoRandom{};
    bool include_nugget = true;

    Index n() const noexcept { return x.rows(); }
    Index p() const noexcept { return x.cols(); }
    bool has_random() const noexcept { return !std::holds_alternative<NoRandom>(random); }
    /// True when phi is a free parameter of the likelihood.
    bool estimates_phi() const;
    /// Throws InvalidInput (RankDeficient for collinear X) when unusable.
    void validate() const;
};

/// Thrown when X does not have full column rank; lists the dependent columns.
class RankDeficient : public InvalidInput {
public:
    RankDeficient(std::vector<std::string> cols);
    const std::vector<std::string>& columns() const noexcept { return cols_; }

private:
    std::vector<std::string> cols_;
};

/// Column names that are linear combinations of earlier columns
/// (relative singular-value tolerance 1e-10). Empty for full rank.
std::vector<std::string> collinear_columns(const Matrix& x, const std::vector<std::string>& names);

struct OptimizerStep {
    int restart = 0;
    int iteration = 0;
    double nll = 0.0;
    Theta theta;
};

struct LmmFit {
    Vector beta;
    double sigma2_eps = 0.0;
    double sigma2_alpha = 0.0;
    std::optional<double> phi;
    double loglik = 0.0;
    Matrix beta_cov;
    LmmSpec spec;
    std::vector<OptimizerStep> optimizer_trace;
    bool converged = true;

    Vector y;
    Vector sigma_inv_resid;  // Sigma^{-1} (y - X beta)
    std::shared_ptr<const BasisExpansion> basis;  // first-order basis at phi-hat

    Theta theta() const { return {sigma2_eps, sigma2_alpha, phi}; }
};

class NonConvergence : public NumericalError {
public:
    explicit NonConvergence(LmmFit best);
    const LmmFit& best_fit() const noexcept { return *best_; }

private:
    std::shared_ptr<const LmmFit> best_;
};

/// Lower guard on variance components; keeps Sigma invertible.
inline constexpr double variance_floor = 1e-12;

/// Negative log-likelihood of y with beta profiled out by GLS.
double marginal_nll(const Vector& y, const LmmSpec& spec, const Theta& theta);

/// GLS estimates and BLUP state at fixed theta.
LmmFit fit_at(const Vector& y, const LmmSpec& spec, const Theta& theta);

struct FitOptions {
    int restarts = 3;
    int max_iterations = 500;
    double diameter_tol = 1e-8;
    bool record_trace = true;
};

/// Maximum-likelihood fit: bounded Nelder-Mead over
/// (log sigma2_eps, log sigma2_alpha, atanh/log phi) from dispersed starts.
LmmFit fit_ml(const Vector& y, const LmmSpec& spec, const FitOptions& opts = {});

/// Search box for phi: ar1 [-0.999, 0.999]; otherwise [1e-3, 10] * max distance.
std::pair<double, double> phi_bounds(Family family, const Coordinates& coords);

Vector blup_eta(const LmmFit& fit);
Vector blup_alpha(const LmmFit& fit);
/// X beta + eta at the training points.
Vector fitted_values(const LmmFit& fit);

Vector predict(const LmmFit& fit, const Coordinates& new_coords, const Matrix& new_x);

struct Interval {
    double lower;
    double upper;
    double width() const { return upper - lower; }
    bool contains(double v) const { return lower <= v && v <= upper; }
};

Interval wald_ci(const LmmFit& fit, Index coef_index, double level);

/// Replaces R(phi) by the fixed eigen basis of corr_matrix(coords, model@phi).
LmmSpec to_first_order(const LmmSpec& spec, double phi);

}  // namespace autobasis
