#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "autobasis/error.hpp"
#include "autobasis/probit.hpp"
#include "oracles.hpp"

using namespace autobasis;

namespace {

struct Synthetic {
    ProbitSpec spec;
    Vector beta;
};

Matrix unit_square(RandomStream& s, Index n) {
    Matrix p(n, 2);
    for (Index i = 0; i < n; ++i) p(i, 0) = s.next_uniform(), p(i, 1) = s.next_uniform();
    return p;
}

Synthetic synthetic(std::uint64_t seed, Index n, double sigma2, double phi) {
    RandomStream s(seed);
    const Matrix pts = unit_square(s, n);
    Matrix x(n, 2);
    for (Index i = 0; i < n; ++i) x.row(i) << 1.0, s.next_gaussian();
    const Vector beta = (Vector(2) << -0.3, 1.0).finished();
    const Coordinates c(pts);
    Synthetic out;
    out.beta = beta;
    out.spec.x = x;
    out.spec.coords = c;
    out.spec.y = simulate_probit(x, beta, c, sigma2, CorrelationModel(Family::exponential, phi), s);
    out.spec.priors.phi_grid_size = 10;
    return out;
}

// Monte Carlo standard error of a column mean by non-overlapping batch means.
double mcse(const Vector& draws, Index batches = 20) {
    const Index len = draws.size() / batches;
    Vector means(batches);
    for (Index b = 0; b < batches; ++b) means(b) = draws.segment(b * len, len).mean();
    const double var = (means.array() - means.mean()).square().sum() / static_cast<double>(batches - 1);
    return std::sqrt(var / static_cast<double>(batches));
}

double sd(const Vector& v) {
    return std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST_CASE("ProbitSpec validation") {
    auto syn = synthetic(1, 20, 0.5, 0.3);
    syn.spec.y(3) = 0.5;
    CHECK_THROWS_AS(gibbs_fit(syn.spec, 10, 5, 1), InvalidInput);
    syn.spec.y(3) = 1.0;
    CHECK_THROWS_AS(gibbs_fit(syn.spec, 10, 10, 1), InvalidInput);
    syn.spec.x = Matrix::Ones(19, 1);
    CHECK_THROWS_AS(gibbs_fit(syn.spec, 10, 5, 1), InvalidInput);
}

TEST_CASE("default phi grid spans (0.05 dmax, dmax]") {
    ProbitSpec spec;
    spec.coords = Coordinates(std::vector<double>{0.0, 10.0});
    const auto g = spec.phi_grid();
    REQUIRE(g.size() == 20);
    CHECK(g.front() > 0.5);
    CHECK(g.back() == doctest::Approx(10.0));
    CHECK(std::is_sorted(g.begin(), g.end()));
}

TEST_CASE("sampling primitives") {
    RandomStream s(3);
    for (double a : {-30.0, -2.0, 0.0, 1.5, 8.0, 40.0}) {
        double sum = 0.0;
        for (int i = 0; i < 2000; ++i) {
            const double v = sample_truncated_below(s, a);
            REQUIRE(v > a);
            sum += v;
        }
        // E[x | x > a] = phi(a) / (1 - Phi(a)); loose Monte Carlo band.
        const double tail = oracle::phi_cdf(-a);
        if (tail > 1e-300) CHECK(std::abs(sum / 2000.0 - oracle::phi_pdf(a) / tail) < 0.1);
    }
    for (double shape : {0.5, 2.0, 7.5}) {
        double sum = 0.0;
        for (int i = 0; i < 20000; ++i) sum += sample_gamma(s, shape);
        CHECK(std::abs(sum / 20000.0 - shape) < 0.05 * shape + 0.02);
    }
}

TEST_CASE("gibbs_fit is deterministic given the seed") {
    const auto syn = synthetic(2, 40, 0.8, 0.3);
    const auto a = gibbs_fit(syn.spec, 300, 100, 77);
    const auto b = gibbs_fit(syn.spec, 300, 100, 77);
    CHECK(a.beta_draws == b.beta_draws);
    CHECK(a.effect_draws == b.effect_draws);
    CHECK(a.sigma2_alpha_draws == b.sigma2_alpha_draws);
    CHECK(a.phi_draws == b.phi_draws);
    const auto c = gibbs_fit(syn.spec, 300, 100, 78);
    CHECK(a.beta_draws != c.beta_draws);

    auto rr = syn.spec;
    rr.knots = default_knots(syn.spec.coords, 9);
    CHECK(gibbs_fit(rr, 200, 50, 5).effect_draws == gibbs_fit(rr, 200, 50, 5).effect_draws);
}

TEST_CASE("draw bookkeeping and truncation") {
    const auto syn = synthetic(4, 30, 0.8, 0.3);
    GibbsOptions opts;
    opts.store_latent = true;
    const auto out = gibbs_fit(syn.spec, 250, 50, 9, opts);
    CHECK(out.retained() == 200);
    CHECK(out.effect_draws.cols() == 30);
    CHECK(out.truncation_violations == 0);
    for (Index r = 0; r < out.latent_draws.rows(); ++r)
        for (Index i = 0; i < 30; ++i) {
            if (syn.spec.y(i) == 1.0) CHECK(out.latent_draws(r, i) >= 0.0);
            else CHECK(out.latent_draws(r, i) < 0.0);
        }
    const std::set<double> grid(out.phi_grid.begin(), out.phi_grid.end());
    for (Index r = 0; r < out.retained(); ++r) CHECK(grid.count(out.phi_draws(r)) == 1);
    CHECK(out.beta_draws.allFinite());
    CHECK(out.effect_draws.allFinite());
    CHECK((out.sigma2_alpha_draws.array() > 0.0).all());
}

TEST_CASE("all-one response warns but samples") {
    auto syn = synthetic(5, 15, 0.5, 0.3);
    syn.spec.y.setOnes();
    const auto out = gibbs_fit(syn.spec, 100, 10, 1);
    CHECK(out.warnings.size() == 1);
    CHECK(out.beta_draws.allFinite());
}

TEST_CASE("switched-off effect matches the probit GLM oracle") {
    const auto syn = synthetic(6, 200, 0.0, 0.3);
    auto spec = syn.spec;
    spec.priors.fixed_sigma2_alpha = 0.0;
    const auto out = gibbs_fit(spec, 4000, 1000, 11);
    const auto glm = oracle::probit_irls(spec.x, spec.y);
    for (Index k = 0; k < 2; ++k) {
        const Vector col = out.beta_draws.col(k);
        CHECK(std::abs(col.mean() - glm.beta(k)) < 3.0 * sd(col));
    }
}

TEST_CASE("simulation recovery of beta, full rank") {
    const auto syn = synthetic(7, 200, 0.8, 0.3);
    const auto out = gibbs_fit(syn.spec, 3000, 1000, 13);
    for (Index k = 0; k < 2; ++k) {
        const Vector col = out.beta_draws.col(k);
        CHECK(std::abs(col.mean() - syn.beta(k)) < 3.0 * sd(col));
    }
}

TEST_CASE("predictive process with knots at the data agrees with full rank") {
    const auto syn = synthetic(8, 60, 0.8, 0.3);
    auto rr = syn.spec;
    rr.knots = syn.spec.coords;
    const auto full = gibbs_fit(syn.spec, 6000, 1000, 21);
    const auto red = gibbs_fit(rr, 6000, 1000, 22);
    CHECK(red.reduced_rank);
    for (Index k = 0; k < 2; ++k) {
        const Vector a = full.beta_draws.col(k), b = red.beta_draws.col(k);
        const double se = std::hypot(mcse(a), mcse(b));
        CHECK(std::abs(a.mean() - b.mean()) < 3.0 * se);
    }
}

TEST_CASE("response and covariate sign symmetries") {
    const auto syn = synthetic(9, 80, 0.5, 0.3);
    auto flip_y = syn.spec;
    flip_y.y = (1.0 - syn.spec.y.array()).matrix();
    auto both = flip_y;
    both.x = -syn.spec.x;
    const auto a = gibbs_fit(syn.spec, 5000, 1000, 31);
    const auto b = gibbs_fit(flip_y, 5000, 1000, 32);
    const auto c = gibbs_fit(both, 5000, 1000, 33);
    for (Index k = 0; k < 2; ++k) {
        const Vector ca = a.beta_draws.col(k), cb = b.beta_draws.col(k), cc = c.beta_draws.col(k);
        // 1 - Phi(x'b) = Phi(-x'b): flipping y negates beta, flipping both leaves it alone.
        CHECK(std::abs(ca.mean() + cb.mean()) < 3.0 * std::hypot(mcse(ca), mcse(cb)));
        CHECK(std::abs(ca.mean() - cc.mean()) < 3.0 * std::hypot(mcse(ca), mcse(cc)));
    }
}

TEST_CASE("posterior_predict") {
    const auto syn = synthetic(10, 80, 1.5, 0.3);
    const auto out = gibbs_fit(syn.spec, 1500, 500, 41);

    SUBCASE("bounds and training-site ordering") {
        // Training sites whose draws of the effect are strongly positive.
        const Vector eta_mean = out.effect_draws.colwise().mean().transpose();
        const Vector p = posterior_predict(out, syn.spec, syn.spec.coords, syn.spec.x);
        CHECK((p.array() >= 0.0).all());
        CHECK((p.array() <= 1.0).all());
        Index top;
        const Vector lin = syn.spec.x * out.beta_draws.colwise().mean().transpose() + eta_mean;
        lin.maxCoeff(&top);
        CHECK(p(top) > p.mean());
    }
    SUBCASE("parallel and serial agree") {
        RandomStream s(1);
        const Matrix g = unit_square(s, 50);
        Matrix gx(50, 2);
        for (Index i = 0; i < 50; ++i) gx.row(i) << 1.0, s.next_gaussian();
        CHECK(posterior_predict(out, syn.spec, Coordinates(g), gx) ==
              serial::posterior_predict(out, syn.spec, Coordinates(g), gx));
    }
    SUBCASE("dimension mismatch") {
        CHECK_THROWS_AS(posterior_predict(out, syn.spec, Coordinates(std::vector<double>{0.5}), Matrix::Ones(1, 2)),
                        InvalidInput);
        CHECK_THROWS_AS(posterior_predict(out, syn.spec, Coordinates(Matrix::Zero(1, 2)), Matrix::Ones(1, 3)),
                        InvalidInput);
    }
}

TEST_CASE("posterior_predict with the effect off is the probit mean") {
    const auto syn = synthetic(11, 120, 0.0, 0.3);
    auto spec = syn.spec;
    spec.priors.fixed_sigma2_alpha = 0.0;
    const auto out = gibbs_fit(spec, 2000, 500, 51);
    RandomStream s(2);
    const Matrix g = unit_square(s, 30);
    Matrix gx(30, 2);
    for (Index i = 0; i < 30; ++i) gx.row(i) << 1.0, 2.0 * s.next_gaussian();
    const Vector p = posterior_predict(out, spec, Coordinates(g), gx);
    const Vector beta_bar = out.beta_draws.colwise().mean().transpose();
    for (Index i = 0; i < 30; ++i) CHECK(std::abs(p(i) - oracle::phi_cdf(gx.row(i).dot(beta_bar))) < 0.02);
}

TEST_CASE("desk-scale occurrence surface has spatial structure beyond the covariates") {
    RandomStream s(12);
    const Index n = 216;
    const Matrix pts = unit_square(s, n);
    Matrix x(n, 2);
    for (Index i = 0; i < n; ++i) x.row(i) << 1.0, std::sin(3.0 * pts(i, 0)) + 0.3 * s.next_gaussian();
    const Coordinates c(pts);
    ProbitSpec spec;
    spec.x = x;
    spec.coords = c;
    spec.y = simulate_probit(x, (Vector(2) << 0.0, 0.8).finished(), c, 2.0, CorrelationModel(Family::exponential, 0.3), s);
    spec.priors.phi_grid_size = 10;
    spec.knots = default_knots(c, 36);
    const auto out = gibbs_fit(spec, 2000, 500, 61);

    const Index side = 32;
    Matrix g(side * side, 2), gx(side * side, 2);
    for (Index a = 0; a < side; ++a)
        for (Index b = 0; b < side; ++b) {
            const Index k = a * side + b;
            g.row(k) << (a + 0.5) / side, (b + 0.5) / side;
            gx.row(k) << 1.0, std::sin(3.0 * g(k, 0));
        }
    const Vector p = posterior_predict(out, spec, Coordinates(g), gx);
    CHECK((p.array() >= 0.0).all());
    CHECK((p.array() <= 1.0).all());

    PosteriorSamples cov_only = out;
    cov_only.sigma2_alpha_draws.setZero();
    const Vector resid = p - posterior_predict(cov_only, spec, Coordinates(g), gx);
    const Vector d = resid.array() - resid.mean();
    double num = 0.0;
    Index pairs = 0;
    for (Index a = 0; a < side; ++a)
        for (Index b = 0; b + 1 < side; ++b) {
            num += d(a * side + b) * d(a * side + b + 1) + d(b * side + a) * d((b + 1) * side + a);
            pairs += 2;
        }
    const double neighbour_corr = (num / static_cast<double>(pairs)) / (d.squaredNorm() / static_cast<double>(d.size()));
    CHECK(neighbour_corr > 0.0);
}
