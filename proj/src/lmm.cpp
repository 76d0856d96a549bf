#include "autobasis/lmm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace autobasis {

FirstOrder FirstOrder::fixed(BasisExpansion basis) {
    FirstOrder f;
    f.fixed_basis = std::make_shared<const BasisExpansion>(std::move(basis));
    return f;
}

FirstOrder FirstOrder::parametric(Family bounds_family, std::function<BasisExpansion(double)> build) {
    FirstOrder f;
    f.build = std::move(build);
    f.phi_family = bounds_family;
    return f;
}

BasisExpansion FirstOrder::at(std::optional<double> phi) const {
    if (fixed_basis) return *fixed_basis;
    const auto p = fixed_phi ? fixed_phi : phi;
    if (!p) throw InvalidInput("phi-dependent basis needs a value of phi");
    return build(*p);
}

FirstOrder first_order_eigen(const Coordinates& coords, Family family) {
    return FirstOrder::parametric(family, [coords, family](double phi) {
        return eigen_basis(coords, CorrelationModel(family, phi));
    });
}

FirstOrder first_order_gaussian_kernel(const Coordinates& coords, const Coordinates& knots) {
    return FirstOrder::parametric(Family::gaussian, [coords, knots](double phi) {
        return gaussian_kernel_basis(coords, knots, phi);
    });
}

FirstOrder first_order_predictive_process(const Coordinates& coords, const Coordinates& knots, Family family) {
    return FirstOrder::parametric(family, [coords, knots, family](double phi) {
        return predictive_process_basis(coords, knots, CorrelationModel(family, phi));
    });
}

bool LmmSpec::estimates_phi() const {
    if (const auto* s = std::get_if<SecondOrder>(&random)) return !s->fixed_phi;
    if (const auto* f = std::get_if<FirstOrder>(&random)) return f->depends_on_phi() && !f->fixed_phi;
    return false;
}

RankDeficient::RankDeficient(std::vector<std::string> cols)
    : InvalidInput([&] {
          std::string msg = "covariate matrix is rank deficient; collinear columns:";
          for (const auto& c : cols) msg += " " + c;
          return msg;
      }()),
      cols_(std::move(cols)) {}

std::vector<std::string> collinear_columns(const Matrix& x, const std::vector<std::string>& names) {
    std::vector<std::string> out;
    const double scale = x.cwiseAbs().maxCoeff();
    Matrix kept(x.rows(), 0);
    for (Index j = 0; j < x.cols(); ++j) {
        Matrix trial(x.rows(), kept.cols() + 1);
        trial << kept, x.col(j);
        Eigen::JacobiSVD<Matrix> svd(trial);
        const auto& s = svd.singularValues();
        const double smin = s(s.size() - 1);
        if (!(scale > 0.0) || smin <= 1e-10 * std::max(s(0), scale)) {
            out.push_back(j < static_cast<Index>(names.size()) ? names[static_cast<std::size_t>(j)]
                                                               : "x" + std::to_string(j + 1));
        } else {
            kept = std::move(trial);
        }
    }
    return out;
}

void LmmSpec::validate() const {
    if (x.cols() < 1) throw InvalidInput("model needs at least one fixed-effect column");
    if (!(x.rows() > x.cols())) throw InvalidInput("model needs more observations than covariates");
    if (!x.allFinite()) throw InvalidInput("covariates must be finite");
    auto bad = collinear_columns(x, column_names);
    if (!bad.empty()) throw RankDeficient(std::move(bad));
    if (std::holds_alternative<SecondOrder>(random) && coords.size() != x.rows()) {
        throw InvalidInput("second-order model needs one coordinate per observation");
    }
}

NonConvergence::NonConvergence(LmmFit best)
    : NumericalError("maximum-likelihood search did not converge from any start"),
      best_(std::make_shared<const LmmFit>(std::move(best))) {}

namespace {

constexpr double log_two_pi = 1.8378770664093454836;

// Sigma^{-1} and log|Sigma| for one covariance structure.
class Covariance {
public:
    virtual ~Covariance() = default;
    virtual Matrix solve(const Matrix& b) const = 0;
    virtual double log_det() const = 0;
};

class ScaledIdentity final : public Covariance {
public:
    ScaledIdentity(Index n, double s2) : n_(n), s2_(s2) {}
    Matrix solve(const Matrix& b) const override { return b / s2_; }
    double log_det() const override { return static_cast<double>(n_) * std::log(s2_); }

private:
    Index n_;
    double s2_;
};

class Dense final : public Covariance {
public:
    explicit Dense(const Matrix& sigma) : chol_(spd_factor(sigma, "Sigma")) {}
    Matrix solve(const Matrix& b) const override { return chol_.llt.solve(b); }
    double log_det() const override { return chol_.log_det(); }

private:
    CholeskyResult chol_;
};

// sigma2_eps I + Zt Zt' via Woodbury and the matrix determinant lemma.
class LowRank final : public Covariance {
public:
    LowRank(Matrix zt, double s2) : zt_(std::move(zt)), s2_(s2) {
        Matrix m = zt_.transpose() * zt_;
        m.diagonal().array() += s2_;
        chol_ = spd_factor(m, "sigma2_eps I + Z'Z");
    }
    Matrix solve(const Matrix& b) const override {
        return (b - zt_ * chol_.llt.solve(zt_.transpose() * b)) / s2_;
    }
    double log_det() const override {
        return static_cast<double>(zt_.rows() - zt_.cols()) * std::log(s2_) + chol_.log_det();
    }

private:
    Matrix zt_;
    double s2_;
    CholeskyResult chol_;
};

struct Evaluation {
    Vector beta;
    Matrix beta_cov;
    Vector sigma_inv_resid;
    double nll = 0.0;
    std::shared_ptr<const BasisExpansion> basis;
};

double floored(double v) { return std::max(v, variance_floor); }

std::optional<double> effective_phi(const LmmSpec& spec, const Theta& theta) {
    if (const auto* s = std::get_if<SecondOrder>(&spec.random)) return s->fixed_phi ? s->fixed_phi : theta.phi;
    if (const auto* f = std::get_if<FirstOrder>(&spec.random)) {
        if (!f->depends_on_phi()) return std::nullopt;
        return f->fixed_phi ? f->fixed_phi : theta.phi;
    }
    return std::nullopt;
}

// Z L with K = L L' the coefficient covariance.
Matrix scaled_basis(const BasisExpansion& b) {
    switch (b.coefficient_covariance()) {
        case CoefficientCovariance::iid: return b.matrix();
        case CoefficientCovariance::eigen_weighted:
            return b.matrix() * b.eigen_weights().cwiseMax(0.0).cwiseSqrt().asDiagonal();
        case CoefficientCovariance::knot_correlated: {
            const auto chol = spd_factor(b.coefficient_cov_matrix(), "R*");
            return b.matrix() * Matrix(chol.llt.matrixL());
        }
    }
    return {};
}

Evaluation evaluate(const Vector& y, const LmmSpec& spec, const Theta& theta) {
    const Index n = spec.n();
    if (y.size() != n) throw InvalidInput("response length does not match the covariate rows");
    const double s2e = spec.include_nugget ? floored(theta.sigma2_eps) : variance_floor;
    const double s2a = floored(theta.sigma2_alpha);

    Evaluation ev;
    std::unique_ptr<Covariance> cov;
    if (std::holds_alternative<NoRandom>(spec.random)) {
        cov = std::make_unique<ScaledIdentity>(n, s2e);
    } else if (const auto* so = std::get_if<SecondOrder>(&spec.random)) {
        const auto phi = effective_phi(spec, theta);
        if (!phi) throw InvalidInput("second-order model needs phi");
        Matrix sigma = s2a * corr_matrix(spec.coords, CorrelationModel(so->family, *phi)).matrix();
        sigma.diagonal().array() += s2e;
        cov = std::make_unique<Dense>(sigma);
    } else {
        const auto& fo = std::get<FirstOrder>(spec.random);
        ev.basis = std::make_shared<const BasisExpansion>(fo.at(effective_phi(spec, theta)));
        if (ev.basis->rows() != n) throw InvalidInput("basis rows do not match the observations");
        cov = std::make_unique<LowRank>(std::sqrt(s2a) * scaled_basis(*ev.basis), s2e);
    }

    const Matrix si_x = cov->solve(spec.x);
    Matrix info = spec.x.transpose() * si_x;
    info = 0.5 * (info + info.transpose());
    const auto info_chol = spd_factor(info, "X' Sigma^-1 X");
    ev.beta = info_chol.llt.solve(si_x.transpose() * y);
    ev.beta_cov = info_chol.llt.solve(Matrix::Identity(spec.p(), spec.p()));
    ev.beta_cov = 0.5 * (ev.beta_cov + ev.beta_cov.transpose());
    const Vector resid = y - spec.x * ev.beta;
    ev.sigma_inv_resid = cov->solve(resid);
    const double quad = resid.dot(ev.sigma_inv_resid);
    ev.nll = 0.5 * (static_cast<double>(n) * log_two_pi + cov->log_det() + quad);
    return ev;
}

LmmFit make_fit(const Vector& y, const LmmSpec& spec, const Theta& theta, Evaluation ev) {
    LmmFit fit;
    fit.beta = std::move(ev.beta);
    fit.beta_cov = std::move(ev.beta_cov);
    fit.sigma2_eps = spec.include_nugget ? floored(theta.sigma2_eps) : 0.0;
    fit.sigma2_alpha = spec.has_random() ? floored(theta.sigma2_alpha) : 0.0;
    fit.phi = effective_phi(spec, theta);
    fit.loglik = -ev.nll;
    fit.spec = spec;
    fit.y = y;
    fit.sigma_inv_resid = std::move(ev.sigma_inv_resid);
    fit.basis = std::move(ev.basis);
    return fit;
}

// Unconstrained-ish coordinates for the simplex search, clamped to a box.
struct Parameterization {
    bool eps_free = false;
    bool alpha_free = false;
    bool phi_free = false;
    std::optional<Family> phi_family;
    double var_lo = std::log(variance_floor);
    double var_hi = 0.0;
    double phi_lo = 0.0, phi_hi = 0.0;  // transformed

    int dim() const { return int(eps_free) + int(alpha_free) + int(phi_free); }

    std::vector<double> lower() const {
        std::vector<double> v;
        if (eps_free) v.push_back(var_lo);
        if (alpha_free) v.push_back(var_lo);
        if (phi_free) v.push_back(phi_lo);
        return v;
    }
    std::vector<double> upper() const {
        std::vector<double> v;
        if (eps_free) v.push_back(var_hi);
        if (alpha_free) v.push_back(var_hi);
        if (phi_free) v.push_back(phi_hi);
        return v;
    }

    double to_phi(double u) const { return *phi_family == Family::ar1 ? std::tanh(u) : std::exp(u); }
    double from_phi(double p) const { return *phi_family == Family::ar1 ? std::atanh(p) : std::log(p); }

    Theta theta(const std::vector<double>& u, const Theta& fixed) const {
        Theta t = fixed;
        std::size_t k = 0;
        if (eps_free) t.sigma2_eps = std::exp(u[k++]);
        if (alpha_free) t.sigma2_alpha = std::exp(u[k++]);
        if (phi_free) t.phi = to_phi(u[k++]);
        return t;
    }
};

struct SimplexResult {
    std::vector<double> x;
    double f = 0.0;
    bool converged = false;
    int iterations = 0;
};

// Nelder-Mead with every trial point projected onto [lo, hi].
template <class F, class Log>
SimplexResult nelder_mead(F&& f, std::vector<double> start, const std::vector<double>& step,
                          const std::vector<double>& lo, const std::vector<double>& hi, int max_iter,
                          double diameter_tol, Log&& log) {
    const std::size_t d = start.size();
    auto project = [&](std::vector<double> p) {
        for (std::size_t i = 0; i < d; ++i) p[i] = std::clamp(p[i], lo[i], hi[i]);
        return p;
    };
    std::vector<std::vector<double>> pts(d + 1, project(start));
    for (std::size_t i = 0; i < d; ++i) {
        auto p = pts[0];
        p[i] += (p[i] + step[i] <= hi[i]) ? step[i] : -step[i];
        pts[i + 1] = project(p);
    }
    std::vector<double> fv(d + 1);
    for (std::size_t i = 0; i <= d; ++i) fv[i] = f(pts[i]);

    SimplexResult res;
    std::vector<std::size_t> order(d + 1);
    for (int it = 0;; ++it) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return fv[a] < fv[b]; });
        const auto best = order.front();
        const auto worst = order.back();
        const auto second = order[d - 1 < d ? d - 1 : 0];
        log(it, pts[best], fv[best]);

        double diameter = 0.0;
        for (std::size_t i = 0; i <= d; ++i)
            for (std::size_t k = 0; k < d; ++k) diameter = std::max(diameter, std::abs(pts[i][k] - pts[best][k]));
        const double spread = fv[worst] - fv[best];
        if (diameter < diameter_tol || spread <= 1e-13 * (1.0 + std::abs(fv[best]))) {
            res = {pts[best], fv[best], true, it};
            return res;
        }
        if (it >= max_iter) {
            res = {pts[best], fv[best], false, it};
            return res;
        }

        std::vector<double> centroid(d, 0.0);
        for (std::size_t i = 0; i <= d; ++i)
            if (i != worst)
                for (std::size_t k = 0; k < d; ++k) centroid[k] += pts[i][k] / static_cast<double>(d);
        auto along = [&](double t) {
            std::vector<double> p(d);
            for (std::size_t k = 0; k < d; ++k) p[k] = centroid[k] + t * (pts[worst][k] - centroid[k]);
            return project(p);
        };

        const auto xr = along(-1.0);
        const double fr = f(xr);
        if (fr < fv[best]) {
            const auto xe = along(-2.0);
            const double fe = f(xe);
            if (fe < fr) {
                pts[worst] = xe;
                fv[worst] = fe;
            } else {
                pts[worst] = xr;
                fv[worst] = fr;
            }
            continue;
        }
        if (fr < fv[second]) {
            pts[worst] = xr;
            fv[worst] = fr;
            continue;
        }
        const bool outside = fr < fv[worst];
        const auto xc = along(outside ? -0.5 : 0.5);
        const double fc = f(xc);
        if (fc < (outside ? fr : fv[worst])) {
            pts[worst] = xc;
            fv[worst] = fc;
            continue;
        }
        for (std::size_t i = 0; i <= d; ++i) {
            if (i == best) continue;
            for (std::size_t k = 0; k < d; ++k) pts[i][k] = pts[best][k] + 0.5 * (pts[i][k] - pts[best][k]);
            pts[i] = project(pts[i]);
            fv[i] = f(pts[i]);
        }
    }
}

double sample_variance(const Vector& v) {
    if (v.size() < 2) return 0.0;
    const double mean = v.mean();
    return (v.array() - mean).square().sum() / static_cast<double>(v.size());
}

}  // namespace

std::pair<double, double> phi_bounds(Family family, const Coordinates& coords) {
    if (family == Family::ar1) return {-0.999, 0.999};
    const double dmax = coords.max_distance();
    if (!(dmax > 0.0)) throw InvalidInput("phi bounds need at least two distinct locations");
    return {1e-3 * dmax, 10.0 * dmax};
}

double marginal_nll(const Vector& y, const LmmSpec& spec, const Theta& theta) {
    return evaluate(y, spec, theta).nll;
}

LmmFit fit_at(const Vector& y, const LmmSpec& spec, const Theta& theta) {
    spec.validate();
    return make_fit(y, spec, theta, evaluate(y, spec, theta));
}

LmmFit fit_ml(const Vector& y, const LmmSpec& spec, const FitOptions& opts) {
    spec.validate();
    if (y.size() != spec.n()) throw InvalidInput("response length does not match the covariate rows");
    if (!y.allFinite()) throw InvalidInput("response must be finite");

    // OLS residual variance sets the scale of the starting points.
    const Evaluation ols = evaluate(y, LmmSpec{spec.x, spec.column_names, spec.coords, NoRandom{}, true}, {1.0, 0.0, {}});
    const Vector ols_resid = y - spec.x * ols.beta;
    const double rss_var = ols_resid.squaredNorm() / static_cast<double>(spec.n());

    if (!spec.has_random()) {
        Theta t{floored(rss_var), 0.0, {}};
        return fit_at(y, spec, t);
    }

    Parameterization par;
    par.var_hi = std::log(std::max(10.0 * sample_variance(y), variance_floor));
    par.eps_free = spec.include_nugget && par.var_hi > par.var_lo;
    par.alpha_free = par.var_hi > par.var_lo;
    if (spec.estimates_phi()) {
        if (const auto* so = std::get_if<SecondOrder>(&spec.random)) par.phi_family = so->family;
        else par.phi_family = std::get<FirstOrder>(spec.random).phi_family;
        const auto [plo, phi_hi] = phi_bounds(*par.phi_family, spec.coords);
        par.phi_free = true;
        par.phi_lo = par.from_phi(plo);
        par.phi_hi = par.from_phi(phi_hi);
    }

    const double v = std::max(rss_var, variance_floor);
    Theta fixed{variance_floor, variance_floor, std::nullopt};

    struct Start {
        double eps_share, alpha_share, phi_pos;  // phi_pos in [0,1] of the transformed box
    };
    const Start starts[] = {{0.5, 0.5, 0.5}, {0.1, 0.9, 0.75}, {0.9, 0.1, 0.25}};

    const auto lo = par.lower();
    const auto hi = par.upper();
    std::vector<OptimizerStep> trace;
    std::optional<SimplexResult> best;
    bool any_converged = false;
    const int restarts = std::clamp(opts.restarts, 1, 3);

    for (int r = 0; r < restarts; ++r) {
        const auto& s = starts[r];
        std::vector<double> x0, step;
        if (par.eps_free) {
            x0.push_back(std::log(std::max(s.eps_share * v, variance_floor)));
            step.push_back(1.0);
        }
        if (par.alpha_free) {
            x0.push_back(std::log(std::max(s.alpha_share * v, variance_floor)));
            step.push_back(1.0);
        }
        if (par.phi_free) {
            x0.push_back(par.phi_lo + s.phi_pos * (par.phi_hi - par.phi_lo));
            step.push_back(0.1 * (par.phi_hi - par.phi_lo));
        }
        if (par.dim() == 0) {
            best = SimplexResult{{}, evaluate(y, spec, fixed).nll, true, 0};
            any_converged = true;
            break;
        }
        auto objective = [&](const std::vector<double>& u) {
            try {
                const double f = evaluate(y, spec, par.theta(u, fixed)).nll;
                return std::isfinite(f) ? f : std::numeric_limits<double>::infinity();
            } catch (const NumericalError&) {
                return std::numeric_limits<double>::infinity();
            }
        };
        auto log = [&](int it, const std::vector<double>& x, double f) {
            if (opts.record_trace) trace.push_back({r, it, f, par.theta(x, fixed)});
        };
        auto res = nelder_mead(objective, x0, step, lo, hi, opts.max_iterations, opts.diameter_tol, log);
        any_converged = any_converged || res.converged;
        if (!best || res.f < best->f) best = std::move(res);
    }

    const Theta theta_hat = par.theta(best->x, fixed);
    LmmFit fit = make_fit(y, spec, theta_hat, evaluate(y, spec, theta_hat));
    fit.optimizer_trace = std::move(trace);
    fit.converged = any_converged;
    if (!std::isfinite(fit.loglik) || !any_converged) throw NonConvergence(std::move(fit));
    return fit;
}

Vector blup_alpha(const LmmFit& fit) {
    if (!fit.basis) throw ContractViolation("blup_alpha needs a first-order fit");
    const auto& b = *fit.basis;
    const Vector zt_w = b.matrix().transpose() * fit.sigma_inv_resid;
    return fit.sigma2_alpha * (b.coefficient_cov_matrix() * zt_w);
}

Vector blup_eta(const LmmFit& fit) {
    const Index n = fit.spec.n();
    if (std::holds_alternative<NoRandom>(fit.spec.random)) return Vector::Zero(n);
    if (const auto* so = std::get_if<SecondOrder>(&fit.spec.random)) {
        const SymMatrix r = corr_matrix(fit.spec.coords, CorrelationModel(so->family, *fit.phi));
        return fit.sigma2_alpha * (r.matrix() * fit.sigma_inv_resid);
    }
    return fit.basis->matrix() * blup_alpha(fit);
}

Vector fitted_values(const LmmFit& fit) { return fit.spec.x * fit.beta + blup_eta(fit); }

Vector predict(const LmmFit& fit, const Coordinates& new_coords, const Matrix& new_x) {
    if (new_x.cols() != fit.spec.p()) throw InvalidInput("new covariates have the wrong number of columns");
    Vector out = new_x * fit.beta;
    if (std::holds_alternative<NoRandom>(fit.spec.random)) return out;
    if (new_coords.size() != new_x.rows()) throw InvalidInput("new coordinates and covariates disagree in length");
    if (const auto* so = std::get_if<SecondOrder>(&fit.spec.random)) {
        if (new_coords.dim() != fit.spec.coords.dim()) throw InvalidInput("coordinate dimensionality mismatch");
        const Matrix c = cross_corr_matrix(new_coords, fit.spec.coords, CorrelationModel(so->family, *fit.phi));
        out += fit.sigma2_alpha * (c * fit.sigma_inv_resid);
        return out;
    }
    out += fit.basis->evaluate(new_coords) * blup_alpha(fit);
    return out;
}

Interval wald_ci(const LmmFit& fit, Index coef_index, double level) {
    if (coef_index < 0 || coef_index >= fit.beta.size()) throw InvalidInput("coefficient index out of range");
    if (!(level > 0.0 && level < 1.0)) throw InvalidInput("confidence level must lie in (0, 1)");
    const double z = normal_quantile(0.5 * (1.0 + level));
    const double se = std::sqrt(std::max(fit.beta_cov(coef_index, coef_index), 0.0));
    return {fit.beta(coef_index) - z * se, fit.beta(coef_index) + z * se};
}

LmmSpec to_first_order(const LmmSpec& spec, double phi) {
    const auto* so = std::get_if<SecondOrder>(&spec.random);
    if (!so) throw ContractViolation("to_first_order needs a second-order spec");
    LmmSpec out = spec;
    out.random = FirstOrder::fixed(eigen_basis(spec.coords, CorrelationModel(so->family, phi)));
    return out;
}

}  // namespace autobasis
