#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "autobasis/corr.hpp"
#include "autobasis/numkernel.hpp"

namespace autobasis {

struct ProbitPriors {
    double beta_variance = 100.0;  // beta ~ N(0, v I)
    double ig_shape = 2.0;         // sigma2_alpha ~ IG(shape, scale)
    double ig_scale = 1.0;
    Index phi_grid_size = 20;      // uniform over (0.05 d_max, d_max]
    std::vector<double> phi_grid;  // overrides phi_grid_size when non-empty
    /// Pin sigma2_alpha (0 switches the spatial effect off entirely).
    std::optional<double> fixed_sigma2_alpha;
};

/// Binary spatial regression y ~ Bernoulli(Phi(X beta + eta)) with an
/// exponential-correlation effect. Setting knots selects the predictive
/// process eta = C R*^{-1} alpha, alpha ~ N(0, sigma2 R*).
struct ProbitSpec {
    Vector y;
    Matrix x;
    Coordinates coords;
    std::optional<Coordinates> knots;
    ProbitPriors priors;
    std::vector<std::string> column_names;

    bool reduced_rank() const noexcept { return knots.has_value(); }
    /// Throws InvalidInput for non-binary y or inconsistent shapes.
    void validate() const;
    std::vector<double> phi_grid() const;
};

struct PosteriorSamples {
    Matrix beta_draws;    // retained iterations x p
    Matrix effect_draws;  // retained x n (eta) or retained x m (alpha)
    Vector sigma2_alpha_draws;
    Vector phi_draws;
    std::vector<int> phi_index;  // grid position of each phi draw
    std::vector<double> phi_grid;
    std::uint64_t seed = 0;
    int n_iter = 0;
    int n_burn = 0;
    bool reduced_rank = false;

    /// Latent utilities that landed on the wrong side of zero (always 0).
    std::int64_t truncation_violations = 0;
    /// Retained latent utilities; filled only when requested.
    Matrix latent_draws;
    std::vector<std::string> warnings;

    Index retained() const noexcept { return beta_draws.rows(); }
};

struct GibbsOptions {
    bool store_latent = false;
};

/// Latent-utility Gibbs sampler. Each sweep draws the truncated-normal
/// utilities, beta, the spatial effect, sigma2_alpha, then phi by griddy
/// Gibbs. Bit-for-bit deterministic given the seed.
PosteriorSamples gibbs_fit(const ProbitSpec& spec, int n_iter, int n_burn, std::uint64_t seed,
                           const GibbsOptions& opts = {});

struct PredictOptions {
    Index thin = 1;
    Index chunk = 256;  // draws per batched product
};

/// Posterior mean occurrence probability at each grid point. The spatial
/// effect at a grid point is integrated over its conditional normal given
/// the sampled effect (kriging for full rank, Z_grid alpha for the
/// predictive process).
Vector posterior_predict(const PosteriorSamples& samples, const ProbitSpec& spec, const Coordinates& grid,
                         const Matrix& grid_x, const PredictOptions& opts = {});

namespace serial {
Vector posterior_predict(const PosteriorSamples& samples, const ProbitSpec& spec, const Coordinates& grid,
                         const Matrix& grid_x, const PredictOptions& opts = {});
}

/// x ~ N(0,1) conditioned on x > a, by inverse CDF on the stream.
double sample_truncated_below(RandomStream& s, double a);
/// Gamma(shape, 1) by Marsaglia-Tsang.
double sample_gamma(RandomStream& s, double shape);

/// Draws y from the probit model with eta ~ N(0, sigma2 R(model)).
Vector simulate_probit(const Matrix& x, const Vector& beta, const Coordinates& coords, double sigma2_alpha,
                       const CorrelationModel& model, RandomStream& stream);

/// N(0, cov) via the symmetric square root (works for singular PSD cov).
Vector draw_mvn(RandomStream& stream, const SymMatrix& cov);

}  // namespace autobasis
