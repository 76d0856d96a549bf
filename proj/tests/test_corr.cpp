#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "autobasis/corr.hpp"
#include "autobasis/error.hpp"

using namespace autobasis;

TEST_CASE("corr_value examples") {
    for (Family f : {Family::ar1, Family::gaussian, Family::exponential})
        CHECK(corr_value(0.0, CorrelationModel(f, 0.5)) == 1.0);
    CHECK(corr_value(2.0, CorrelationModel(Family::ar1, 0.5)) == 0.25);
    CHECK(std::abs(corr_value(2.0, CorrelationModel(Family::gaussian, 4.0)) - 0.36787944117144233) < 1e-15);
    CHECK(std::abs(corr_value(3.0, CorrelationModel(Family::exponential, 1.5)) - std::exp(-2.0)) < 1e-15);
    CHECK_THROWS_AS(corr_value(-1.0, CorrelationModel(Family::gaussian, 1.0)), InvalidInput);
}

TEST_CASE("CorrelationModel parameter domains") {
    CHECK_THROWS_AS(CorrelationModel(Family::ar1, 1.0), InvalidInput);
    CHECK_THROWS_AS(CorrelationModel(Family::ar1, -1.0), InvalidInput);
    CHECK_THROWS_AS(CorrelationModel(Family::gaussian, 0.0), InvalidInput);
    CHECK_THROWS_AS(CorrelationModel(Family::exponential, -2.0), InvalidInput);
    CHECK_NOTHROW(CorrelationModel(Family::ar1, -0.3));
    CHECK(parse_family("ar1") == Family::ar1);
    CHECK_THROWS_AS(parse_family("matern"), InvalidInput);
}

TEST_CASE("corr_matrix reproduces the three-point AR(1) matrix exactly") {
    const SymMatrix r = corr_matrix(Coordinates(std::vector<double>{1, 2, 3}), CorrelationModel(Family::ar1, 0.5));
    Matrix expected(3, 3);
    expected << 1, 0.5, 0.25, 0.5, 1, 0.5, 0.25, 0.5, 1;
    CHECK(r.matrix() == expected);
}

TEST_CASE("corr_matrix edge cases") {
    const SymMatrix one = corr_matrix(Coordinates(std::vector<double>{4.2}), CorrelationModel(Family::gaussian, 3.0));
    CHECK(one.order() == 1);
    CHECK(one(0, 0) == 1.0);

    const SymMatrix far = corr_matrix(Coordinates(std::vector<double>{0, 10}), CorrelationModel(Family::gaussian, 1.0));
    CHECK(far(0, 1) < 1e-40);
    CHECK(far(0, 1) == std::exp(-100.0));

    // Negative ar1 phi with integer lags alternates sign.
    const SymMatrix alt = corr_matrix(Coordinates(std::vector<double>{1, 2, 3}), CorrelationModel(Family::ar1, -0.5));
    CHECK(alt(0, 1) == -0.5);
    CHECK(alt(0, 2) == 0.25);
    CHECK_THROWS_AS(corr_matrix(Coordinates(std::vector<double>{0, 0.5}), CorrelationModel(Family::ar1, -0.5)),
                    InvalidInput);
}

TEST_CASE("corr_matrix properties over random inputs") {
    RandomStream s(5);
    for (int trial = 0; trial < 20; ++trial) {
        const Index n = 2 + static_cast<Index>(s.next_u64() % 30);
        Matrix pts(n, 2);
        for (Index i = 0; i < n; ++i) pts(i, 0) = 10 * s.next_uniform(), pts(i, 1) = 10 * s.next_uniform();
        for (Family f : {Family::gaussian, Family::exponential}) {
            const CorrelationModel model(f, 0.5 + 5 * s.next_uniform());
            const SymMatrix r = corr_matrix(Coordinates(pts), model);
            CHECK(r.matrix().diagonal() == Vector::Ones(n));
            CHECK(r.matrix() == r.matrix().transpose());
            CHECK((r.matrix().array() >= 0.0).all());
            CHECK((r.matrix().array() <= 1.0).all());
        }
    }
}

TEST_CASE("ar1 correlation matrices are positive definite on random time grids") {
    RandomStream s(6);
    for (int trial = 0; trial < 20; ++trial) {
        const Index n = 2 + static_cast<Index>(s.next_u64() % 49);
        std::vector<double> t(static_cast<std::size_t>(n));
        double acc = 0.0;
        for (auto& v : t) v = (acc += 0.1 + 2.0 * s.next_uniform());
        const SymMatrix r = corr_matrix(Coordinates(t), CorrelationModel(Family::ar1, 0.05 + 0.9 * s.next_uniform()));
        CHECK(sym_eigen(r).values.minCoeff() > 0.0);
    }
}

TEST_CASE("monotonicity in distance and in phi") {
    for (Family f : {Family::gaussian, Family::exponential}) {
        double prev = 2.0;
        for (double d = 0.0; d < 5.0; d += 0.25) {
            const double v = corr_value(d, CorrelationModel(f, 2.0));
            CHECK(v < prev);
            prev = v;
        }
        prev = -1.0;
        for (double phi = 0.5; phi < 8.0; phi += 0.5) {
            const double v = corr_value(1.3, CorrelationModel(f, phi));
            CHECK(v > prev);
            prev = v;
        }
    }
}

TEST_CASE("gaussian kernel/correlation link: exp(-2 d^2/phi) equals corr_value at phi/2") {
    for (double d : {0.0, 0.3, 1.0, 2.7})
        for (double phi : {0.5, 1.0, 3.3}) {
            CHECK(std::exp(-2.0 * d * d / phi) == corr_value(d, CorrelationModel(Family::gaussian, phi / 2.0)));
        }
}

TEST_CASE("cross_corr_matrix") {
    const Coordinates pts(std::vector<double>{0.0, 1.0, 2.5});
    const CorrelationModel model(Family::exponential, 1.0);
    SUBCASE("knots equal to the data") {
        CHECK(cross_corr_matrix(pts, pts, model) == corr_matrix(pts, model).matrix());
    }
    SUBCASE("point at a knot") {
        const Coordinates knots(std::vector<double>{1.0, 7.0});
        const Matrix c = cross_corr_matrix(pts, knots, model);
        CHECK(c(1, 0) == 1.0);
    }
    SUBCASE("element-wise against corr_value") {
        const Coordinates knots(std::vector<double>{0.5, 2.0});
        const Matrix c = cross_corr_matrix(pts, knots, model);
        REQUIRE(c.rows() == 3);
        REQUIRE(c.cols() == 2);
        for (Index i = 0; i < 3; ++i)
            for (Index j = 0; j < 2; ++j)
                CHECK(c(i, j) == corr_value(std::abs(pts.points()(i, 0) - knots.points()(j, 0)), model));
    }
    SUBCASE("dimension mismatch") {
        CHECK_THROWS_AS(cross_corr_matrix(pts, Coordinates(Matrix::Zero(2, 2)), model), InvalidInput);
    }
}

TEST_CASE("parallel kernels match the serial reference bit for bit") {
    RandomStream s(8);
    Matrix pts(300, 2), kn(40, 2);
    for (Index i = 0; i < 300; ++i) pts(i, 0) = s.next_uniform(), pts(i, 1) = s.next_uniform();
    for (Index i = 0; i < 40; ++i) kn(i, 0) = s.next_uniform(), kn(i, 1) = s.next_uniform();
    const Coordinates c(pts), k(kn);
    for (Family f : {Family::gaussian, Family::exponential}) {
        const CorrelationModel model(f, 0.3);
        CHECK(corr_matrix(c, model).matrix() == serial::corr_matrix(c, model).matrix());
        CHECK(cross_corr_matrix(c, k, model) == serial::cross_corr_matrix(c, k, model));
    }
}

TEST_CASE("default knots") {
    const auto k1 = default_knots(Coordinates(std::vector<double>{3, 1, 2, 9}), 5);
    CHECK(k1.size() == 5);
    CHECK(k1.points()(0, 0) == 1.0);
    CHECK(k1.points()(4, 0) == 9.0);

    Matrix pts(4, 2);
    pts << 0, 0, 2, 1, 1, 0.5, 2, 0;
    const auto k2 = default_knots(Coordinates(pts), 50);
    CHECK(k2.size() == 50);
    CHECK(k2.points().col(0).minCoeff() == 0.0);
    CHECK(k2.points().col(0).maxCoeff() == 2.0);
    const auto k3 = default_knots(Coordinates(pts), 7);
    CHECK(k3.size() == 7);
}
