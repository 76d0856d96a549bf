#include "autobasis/probit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "autobasis/error.hpp"

namespace autobasis {

void ProbitSpec::validate() const {
    const Index n = y.size();
    if (n < 1) throw InvalidInput("probit model needs observations");
    if (x.rows() != n) throw InvalidInput("covariate rows do not match the response");
    if (coords.size() != n) throw InvalidInput("need one coordinate per observation");
    for (Index i = 0; i < n; ++i)
        if (y(i) != 0.0 && y(i) != 1.0) throw InvalidInput("probit response must be binary (0/1)");
    if (knots && knots->dim() != coords.dim()) throw InvalidInput("knot dimensionality mismatch");
    if (!(priors.beta_variance > 0.0)) throw InvalidInput("beta prior variance must be positive");
    if (!(priors.ig_shape > 0.0 && priors.ig_scale > 0.0)) throw InvalidInput("inverse-gamma prior must be proper");
    if (priors.fixed_sigma2_alpha && *priors.fixed_sigma2_alpha < 0.0) {
        throw InvalidInput("fixed sigma2_alpha must be non-negative");
    }
}

std::vector<double> ProbitSpec::phi_grid() const {
    if (!priors.phi_grid.empty()) {
        for (double v : priors.phi_grid)
            if (!(v > 0.0)) throw InvalidInput("phi grid values must be positive");
        return priors.phi_grid;
    }
    if (priors.phi_grid_size < 1) throw InvalidInput("phi grid needs at least one point");
    const double dmax = coords.max_distance();
    if (!(dmax > 0.0)) throw InvalidInput("phi grid needs two distinct locations");
    const double lo = 0.05 * dmax;
    const auto g = priors.phi_grid_size;
    std::vector<double> out(static_cast<std::size_t>(g));
    for (Index k = 0; k < g; ++k)
        out[static_cast<std::size_t>(k)] = lo + (dmax - lo) * static_cast<double>(k + 1) / static_cast<double>(g);
    return out;
}

double sample_truncated_below(RandomStream& s, double a) {
    const double u = s.next_uniform();
    double x;
    if (a >= 0.0) {
        const double tail = normal_sf(a);
        x = tail > 0.0 ? -normal_quantile(u * tail) : a - std::log(u) / a;
    } else {
        const double lo = normal_cdf(a);
        double p = lo + u * (1.0 - lo);
        p = std::min(p, std::nextafter(1.0, 0.0));
        x = normal_quantile(p);
    }
    return x > a ? x : std::nextafter(a, std::numeric_limits<double>::infinity());
}

double sample_gamma(RandomStream& s, double shape) {
    if (!(shape > 0.0)) throw InvalidInput("gamma shape must be positive");
    if (shape < 1.0) {
        const double g = sample_gamma(s, shape + 1.0);
        return g * std::pow(s.next_uniform(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        const double x = s.next_gaussian();
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        const double u = s.next_uniform();
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
}

Vector draw_mvn(RandomStream& stream, const SymMatrix& cov) {
    const EigenPair ep = sym_eigen(cov);
    Vector xi(cov.order());
    for (Index i = 0; i < xi.size(); ++i) xi(i) = stream.next_gaussian();
    const Vector scale = ep.values.cwiseMax(0.0).cwiseSqrt();
    return ep.vectors * scale.cwiseProduct(xi);
}

Vector simulate_probit(const Matrix& x, const Vector& beta, const Coordinates& coords, double sigma2_alpha,
                       const CorrelationModel& model, RandomStream& stream) {
    if (x.cols() != beta.size() || x.rows() != coords.size()) throw InvalidInput("simulate_probit shape mismatch");
    Vector mean = x * beta;
    if (sigma2_alpha > 0.0) {
        const SymMatrix r = corr_matrix(coords, model);
        mean += std::sqrt(sigma2_alpha) * draw_mvn(stream, r);
    }
    Vector y(mean.size());
    for (Index i = 0; i < y.size(); ++i) y(i) = (mean(i) + stream.next_gaussian()) >= 0.0 ? 1.0 : 0.0;
    return y;
}

namespace {

Vector gaussians(RandomStream& s, Index n) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = s.next_gaussian();
    return v;
}

int draw_categorical(RandomStream& s, const std::vector<double>& log_weights) {
    const double top = *std::max_element(log_weights.begin(), log_weights.end());
    std::vector<double> cum(log_weights.size());
    double acc = 0.0;
    for (std::size_t g = 0; g < log_weights.size(); ++g) {
        acc += std::exp(log_weights[g] - top);
        cum[g] = acc;
    }
    const double u = s.next_uniform() * acc;
    const auto it = std::upper_bound(cum.begin(), cum.end(), u);
    return static_cast<int>(std::min<std::ptrdiff_t>(it - cum.begin(), static_cast<std::ptrdiff_t>(cum.size()) - 1));
}

// Full-rank effect: R(phi_g) = Q diag(lambda) Q' per grid value.
struct FullRankGrid {
    Matrix q;
    Vector lambda;
    Vector inv_lambda;  // 0 where lambda was clamped
    double log_det = 0.0;
    Index rank = 0;
};

FullRankGrid full_rank_grid(const Coordinates& coords, double phi) {
    EigenPair ep = sym_eigen(corr_matrix(coords, CorrelationModel(Family::exponential, phi)));
    FullRankGrid g;
    const double cut = 1e-12 * ep.values(0);
    g.lambda = ep.values;
    g.inv_lambda = Vector::Zero(ep.values.size());
    for (Index k = 0; k < ep.values.size(); ++k) {
        if (ep.values(k) > cut) {
            g.inv_lambda(k) = 1.0 / ep.values(k);
            g.log_det += std::log(ep.values(k));
            ++g.rank;
        } else {
            g.lambda(k) = 0.0;
        }
    }
    g.q = std::move(ep.vectors);
    return g;
}

// Predictive process: Z = C R*^{-1}; alpha ~ N(0, sigma2 R*).
struct ReducedGrid {
    Matrix z;
    Matrix ztz;
    Matrix rstar_inv;
    double log_det = 0.0;
};

ReducedGrid reduced_grid(const Coordinates& coords, const Coordinates& knots, double phi) {
    const CorrelationModel model(Family::exponential, phi);
    const SymMatrix rstar = corr_matrix(knots, model);
    const auto chol = spd_factor(rstar.matrix(), "R*");
    ReducedGrid g;
    g.rstar_inv = chol.llt.solve(Matrix::Identity(knots.size(), knots.size()));
    g.rstar_inv = 0.5 * (g.rstar_inv + g.rstar_inv.transpose());
    g.z = cross_corr_matrix(coords, knots, model) * g.rstar_inv;
    g.ztz = g.z.transpose() * g.z;
    g.log_det = chol.log_det();
    return g;
}

}  // namespace

PosteriorSamples gibbs_fit(const ProbitSpec& spec, int n_iter, int n_burn, std::uint64_t seed,
                           const GibbsOptions& opts) {
    spec.validate();
    if (!(n_burn >= 0 && n_iter > n_burn)) throw InvalidInput("need n_iter > n_burn >= 0");

    const Index n = spec.y.size();
    const Index p = spec.x.cols();
    const auto grid = spec.phi_grid();
    const int ngrid = static_cast<int>(grid.size());
    const bool reduced = spec.reduced_rank();
    const Index m = reduced ? spec.knots->size() : n;
    const auto& pr = spec.priors;
    const bool effect_off = pr.fixed_sigma2_alpha && *pr.fixed_sigma2_alpha == 0.0;

    PosteriorSamples out;
    out.seed = seed;
    out.n_iter = n_iter;
    out.n_burn = n_burn;
    out.reduced_rank = reduced;
    out.phi_grid = grid;
    const double ones = spec.y.sum();
    if (ones == 0.0 || ones == static_cast<double>(n)) {
        out.warnings.push_back("response is all " + std::string(ones == 0.0 ? "0" : "1") +
                               "; posterior is dominated by the prior");
    }

    std::vector<FullRankGrid> full;
    std::vector<ReducedGrid> red;
    if (!effect_off) {
        if (reduced) {
            for (double phi : grid) red.push_back(reduced_grid(spec.coords, *spec.knots, phi));
        } else {
            for (double phi : grid) full.push_back(full_rank_grid(spec.coords, phi));
        }
    }

    // beta | z, effect ~ N(V X'(z - effect), V), V^{-1} = X'X + I / v
    Matrix beta_prec = spec.x.transpose() * spec.x;
    beta_prec.diagonal().array() += 1.0 / pr.beta_variance;
    const auto beta_chol = spd_factor(beta_prec, "X'X + I/v");
    const Matrix beta_upper = beta_chol.llt.matrixU();

    RandomStream rng(seed);
    Vector beta = Vector::Zero(p);
    Vector effect = Vector::Zero(m);  // eta (full rank) or alpha (reduced)
    Vector eta = Vector::Zero(n);
    double sigma2 = pr.fixed_sigma2_alpha ? *pr.fixed_sigma2_alpha
                                          : (pr.ig_shape > 1.0 ? pr.ig_scale / (pr.ig_shape - 1.0) : pr.ig_scale);
    int g = ngrid / 2;
    Vector z(n);

    const int keep = n_iter - n_burn;
    out.beta_draws.resize(keep, p);
    out.effect_draws.resize(keep, m);
    out.sigma2_alpha_draws.resize(keep);
    out.phi_draws.resize(keep);
    out.phi_index.resize(static_cast<std::size_t>(keep));
    if (opts.store_latent) out.latent_draws.resize(keep, n);

    std::vector<double> logw(static_cast<std::size_t>(ngrid));
    for (int it = 0; it < n_iter; ++it) {
        // (1) latent utilities
        const Vector mu = spec.x * beta + eta;
        for (Index i = 0; i < n; ++i) {
            if (spec.y(i) == 1.0) {
                z(i) = mu(i) + sample_truncated_below(rng, -mu(i));
            } else {
                z(i) = mu(i) - sample_truncated_below(rng, mu(i));
            }
            if ((spec.y(i) == 1.0) != (z(i) >= 0.0)) ++out.truncation_violations;
        }

        // (2) beta
        {
            const Vector rhs = spec.x.transpose() * (z - eta);
            const Vector mean = beta_chol.llt.solve(rhs);
            beta = mean + beta_upper.triangularView<Eigen::Upper>().solve(gaussians(rng, p));
        }

        if (!effect_off) {
            const Vector resid = z - spec.x * beta;
            if (!reduced) {
                const auto& fg = full[static_cast<std::size_t>(g)];
                // (3) eta | . = Q (s .* Q'r + sqrt(s) .* xi), s = sigma2 lambda / (1 + sigma2 lambda)
                const Vector s = (sigma2 * fg.lambda.array() / (1.0 + sigma2 * fg.lambda.array())).matrix();
                const Vector u = fg.q.transpose() * resid;
                const Vector xi = gaussians(rng, n);
                effect = fg.q * (s.cwiseProduct(u) + s.cwiseSqrt().cwiseProduct(xi));
                eta = effect;
                // (4) sigma2 | eta
                if (!pr.fixed_sigma2_alpha) {
                    const Vector c = fg.q.transpose() * eta;
                    const double quad = c.cwiseAbs2().dot(fg.inv_lambda);
                    const double shape = pr.ig_shape + 0.5 * static_cast<double>(fg.rank);
                    const double scale = pr.ig_scale + 0.5 * quad;
                    sigma2 = scale / sample_gamma(rng, shape);
                }
                // (5) phi | eta, sigma2 on the grid
                for (int k = 0; k < ngrid; ++k) {
                    const auto& gk = full[static_cast<std::size_t>(k)];
                    const Vector c = gk.q.transpose() * eta;
                    const double quad = c.cwiseAbs2().dot(gk.inv_lambda);
                    logw[static_cast<std::size_t>(k)] = -0.5 * gk.log_det -
                                                        0.5 * static_cast<double>(gk.rank) * std::log(sigma2) -
                                                        0.5 * quad / sigma2;
                }
                g = draw_categorical(rng, logw);
            } else {
                const auto& rg = red[static_cast<std::size_t>(g)];
                // (3) alpha | . ~ N(P^{-1} Z'r, P^{-1}), P = Z'Z + R*^{-1} / sigma2
                Matrix prec = rg.ztz + rg.rstar_inv / sigma2;
                prec = 0.5 * (prec + prec.transpose());
                const auto chol = spd_factor(prec, "Z'Z + R*^-1/sigma2");
                const Vector mean = chol.llt.solve(rg.z.transpose() * resid);
                const Matrix upper = chol.llt.matrixU();
                effect = mean + upper.triangularView<Eigen::Upper>().solve(gaussians(rng, m));
                // (4) sigma2 | alpha
                if (!pr.fixed_sigma2_alpha) {
                    const double quad = effect.dot(rg.rstar_inv * effect);
                    const double shape = pr.ig_shape + 0.5 * static_cast<double>(m);
                    const double scale = pr.ig_scale + 0.5 * quad;
                    sigma2 = scale / sample_gamma(rng, shape);
                }
                // (5) phi | alpha, sigma2, z, beta; Z depends on phi too
                for (int k = 0; k < ngrid; ++k) {
                    const auto& gk = red[static_cast<std::size_t>(k)];
                    const double quad = effect.dot(gk.rstar_inv * effect);
                    const double fit = (resid - gk.z * effect).squaredNorm();
                    logw[static_cast<std::size_t>(k)] = -0.5 * gk.log_det - 0.5 * quad / sigma2 - 0.5 * fit;
                }
                g = draw_categorical(rng, logw);
                eta = red[static_cast<std::size_t>(g)].z * effect;
            }
        } else {
            // Effect switched off: phi has no likelihood information.
            std::fill(logw.begin(), logw.end(), 0.0);
            g = draw_categorical(rng, logw);
        }

        if (it >= n_burn) {
            const Index r = it - n_burn;
            out.beta_draws.row(r) = beta.transpose();
            out.effect_draws.row(r) = effect.transpose();
            out.sigma2_alpha_draws(r) = effect_off ? 0.0 : sigma2;
            out.phi_draws(r) = grid[static_cast<std::size_t>(g)];
            out.phi_index[static_cast<std::size_t>(r)] = g;
            if (opts.store_latent) out.latent_draws.row(r) = z.transpose();
        }
    }
    return out;
}

namespace {

// Per-grid-value linear map from the sampled effect to the grid effect, and
// the conditional variance left over (per unit sigma2).
struct GridMap {
    Matrix w;        // n_grid x (n or m)
    Vector resid_v;  // n_grid
};

GridMap grid_map(const ProbitSpec& spec, const Coordinates& grid, double phi) {
    const CorrelationModel model(Family::exponential, phi);
    GridMap gm;
    if (spec.reduced_rank()) {
        const SymMatrix rstar = corr_matrix(*spec.knots, model);
        gm.w = spd_solve(rstar, cross_corr_matrix(grid, *spec.knots, model).transpose(), "R*").x.transpose();
        gm.resid_v = Vector::Zero(grid.size());
    } else {
        const SymMatrix r = corr_matrix(spec.coords, model);
        const Matrix c = cross_corr_matrix(grid, spec.coords, model);
        gm.w = spd_solve(r, c.transpose(), "R").x.transpose();
        gm.resid_v = (1.0 - c.cwiseProduct(gm.w).rowwise().sum().array()).cwiseMax(0.0).matrix();
    }
    return gm;
}

template <bool Parallel>
Vector predict_impl(const PosteriorSamples& samples, const ProbitSpec& spec, const Coordinates& grid,
                    const Matrix& grid_x, const PredictOptions& opts) {
    if (grid.dim() != spec.coords.dim()) throw InvalidInput("grid dimensionality mismatch");
    if (grid_x.rows() != grid.size() || grid_x.cols() != samples.beta_draws.cols()) {
        throw InvalidInput("grid covariates have the wrong shape");
    }
    if (samples.retained() < 1) throw InvalidInput("no retained draws");
    const Index ng = grid.size();
    const Index thin = std::max<Index>(opts.thin, 1);
    const Index chunk = std::max<Index>(opts.chunk, 1);

    // Group draws by grid value so each conditional map is built once.
    std::vector<std::vector<Index>> by_grid(samples.phi_grid.size());
    Index used = 0;
    for (Index t = 0; t < samples.retained(); t += thin) {
        by_grid[static_cast<std::size_t>(samples.phi_index[static_cast<std::size_t>(t)])].push_back(t);
        ++used;
    }
    const bool effect_on = samples.sigma2_alpha_draws.maxCoeff() > 0.0;

    Vector sum = Vector::Zero(ng);
    for (std::size_t g = 0; g < by_grid.size(); ++g) {
        const auto& draws = by_grid[g];
        if (draws.empty()) continue;
        GridMap gm;
        if (effect_on) gm = grid_map(spec, grid, samples.phi_grid[g]);
        for (std::size_t start = 0; start < draws.size(); start += static_cast<std::size_t>(chunk)) {
            const Index cnt = static_cast<Index>(std::min(draws.size() - start, static_cast<std::size_t>(chunk)));
            Matrix b(samples.beta_draws.cols(), cnt);
            Matrix e(samples.effect_draws.cols(), cnt);
            Vector s2(cnt);
            for (Index c = 0; c < cnt; ++c) {
                const Index t = draws[start + static_cast<std::size_t>(c)];
                b.col(c) = samples.beta_draws.row(t).transpose();
                e.col(c) = samples.effect_draws.row(t).transpose();
                s2(c) = samples.sigma2_alpha_draws(t);
            }
            Matrix lin = grid_x * b;
            if (effect_on) lin += gm.w * e;
            const Vector* rv = effect_on ? &gm.resid_v : nullptr;
#pragma omp parallel for schedule(static) if (Parallel)
            for (Index i = 0; i < ng; ++i) {
                double acc = 0.0;
                for (Index c = 0; c < cnt; ++c) {
                    const double var = rv ? s2(c) * (*rv)(i) : 0.0;
                    acc += normal_cdf(lin(i, c) / std::sqrt(1.0 + var));
                }
                sum(i) += acc;
            }
        }
    }
    return sum / static_cast<double>(used);
}

}  // namespace

Vector posterior_predict(const PosteriorSamples& samples, const ProbitSpec& spec, const Coordinates& grid,
                         const Matrix& grid_x, const PredictOptions& opts) {
    return predict_impl<true>(samples, spec, grid, grid_x, opts);
}

namespace serial {
Vector posterior_predict(const PosteriorSamples& samples, const ProbitSpec& spec, const Coordinates& grid,
                         const Matrix& grid_x, const PredictOptions& opts) {
    return predict_impl<false>(samples, spec, grid, grid_x, opts);
}
}  // namespace serial

}  // namespace autobasis
