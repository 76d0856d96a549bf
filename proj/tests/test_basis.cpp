#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "autobasis/basis.hpp"
#include "autobasis/error.hpp"
#include "oracles.hpp"

using namespace autobasis;

namespace {

Vector lsq_fitted(const Matrix& z, const Vector& y) {
    return z * z.colPivHouseholderQr().solve(y);
}

Matrix random_psd(RandomStream& s, Index n, Index rank) {
    Matrix a(n, rank);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < rank; ++j) a(i, j) = s.next_gaussian();
    Matrix p = a * a.transpose();
    return 0.5 * (p + p.transpose());
}

Matrix ar1_three() {
    Matrix r(3, 3);
    r << 1, 0.5, 0.25, 0.5, 1, 0.5, 0.25, 0.5, 1;
    return r;
}

}  // namespace

TEST_CASE("polynomial_basis") {
    Vector x(2);
    x << 2, 3;
    const auto b = polynomial_basis(x, 2);
    Matrix expected(2, 3);
    expected << 1, 2, 4, 1, 3, 9;
    CHECK(b.matrix() == expected);
    CHECK(b.columns()[2].power == 2.0);

    const auto c = polynomial_basis(x, 0);
    CHECK(c.cols() == 1);
    CHECK(c.matrix() == Matrix::Ones(2, 1));

    CHECK_THROWS_AS(polynomial_basis(x, 11), UnsupportedDegree);
    CHECK_THROWS_AS(polynomial_basis(x, -1), UnsupportedDegree);
}

TEST_CASE("polynomial_basis least squares matches the normal-equations oracle") {
    RandomStream s(21);
    Vector x(100), y(100);
    for (Index i = 0; i < 100; ++i) {
        x(i) = s.next_uniform();
        y(i) = 1.0 - 2.0 * x(i) + 3.0 * x(i) * x(i) + 0.1 * s.next_gaussian();
    }
    Matrix design(100, 3);
    for (Index i = 0; i < 100; ++i) design.row(i) << 1.0, x(i), x(i) * x(i);
    const Vector oracle_fit = design * oracle::ols(design, y);
    CHECK((lsq_fitted(polynomial_basis(x, 2).matrix(), y) - oracle_fit).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("shifted_quadratic_basis") {
    Vector knots(3);
    knots << 1140, 2620, 3420;
    const auto b = shifted_quadratic_basis(Vector::Constant(1, 1140.0), knots);
    CHECK(b.matrix()(0, 0) == 0.0);
    CHECK(b.matrix()(0, 1) == 1480.0 * 1480.0);
    CHECK(b.matrix()(0, 2) == 2280.0 * 2280.0);

    const auto at_knots = shifted_quadratic_basis(knots, knots);
    for (Index j = 0; j < 3; ++j) CHECK(at_knots.matrix()(j, j) == 0.0);

    Vector dup(3);
    dup << 1, 2, 2;
    CHECK_THROWS_AS(shifted_quadratic_basis(knots, dup), InvalidKnots);
    CHECK_THROWS_AS(shifted_quadratic_basis(knots, Vector::LinSpaced(2, 0, 1)), InvalidKnots);
}

TEST_CASE("shifted quadratic columns span {1, x, x^2}") {
    RandomStream s(4);
    for (int trial = 0; trial < 10; ++trial) {
        Vector x(12), k(3);
        for (Index i = 0; i < 12; ++i) x(i) = 4000.0 * s.next_uniform();
        k << 4000.0 * s.next_uniform(), 4000.0 * s.next_uniform(), 4000.0 * s.next_uniform();
        const Matrix z = shifted_quadratic_basis(x, k).matrix();
        const Matrix mono = polynomial_basis(x, 2).matrix();
        for (Index c = 0; c < 3; ++c) {
            const Vector target = mono.col(c);
            const Vector proj = lsq_fitted(z, target);
            CHECK((proj - target).norm() <= 1e-8 * std::max(1.0, target.norm()));
        }
    }
}

TEST_CASE("span equivalence of the two quadratic parameterizations") {
    RandomStream s(12);
    for (int trial = 0; trial < 20; ++trial) {
        const Index n = 4 + static_cast<Index>(s.next_u64() % 40);
        Vector x(n), y(n), k(3);
        for (Index i = 0; i < n; ++i) {
            x(i) = 500.0 + 3500.0 * s.next_uniform();
            y(i) = 10.0 * s.next_gaussian();
        }
        k << 100.0 + 4000.0 * s.next_uniform(), 100.0 + 4000.0 * s.next_uniform(), 100.0 + 4000.0 * s.next_uniform();
        const Vector a = lsq_fitted(polynomial_basis(x, 2).matrix(), y);
        const Vector b = lsq_fitted(shifted_quadratic_basis(x, k).matrix(), y);
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("eigen_basis") {
    SUBCASE("identity") {
        const auto b = eigen_basis(SymMatrix::identity(4));
        CHECK((b.matrix().cwiseAbs() - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-14);
    }
    SUBCASE("three-point AR(1) against the published Q Lambda^{1/2}") {
        const auto b = eigen_basis(SymMatrix(ar1_three()));
        const double z[3][3] = {{0.74, 0.61, 0.29}, {0.87, 0.0, 0.49}, {0.74, 0.61, 0.29}};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) CHECK(std::abs(std::abs(b.matrix()(i, j)) - z[i][j]) < 0.01);
    }
    SUBCASE("random PSD 6x6 reconstruction") {
        RandomStream s(31);
        const Matrix r = random_psd(s, 6, 6);
        const auto b = eigen_basis(SymMatrix(r));
        CHECK((b.matrix() * b.matrix().transpose() - r).cwiseAbs().maxCoeff() < 1e-10 * std::max(1.0, r.cwiseAbs().maxCoeff()));
    }
    SUBCASE("not PSD") {
        Matrix bad(2, 2);
        bad << 1, 2, 2, 1;
        CHECK_THROWS_AS(eigen_basis(SymMatrix(bad)), NotPsd);
    }
}

TEST_CASE("eigenvector_basis") {
    const auto id = eigenvector_basis(SymMatrix::identity(3));
    CHECK((id.matrix().cwiseAbs() - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(id.eigen_weights().isApprox(Vector::Ones(3)));
    CHECK(id.coefficient_covariance() == CoefficientCovariance::eigen_weighted);

    const auto b = eigenvector_basis(SymMatrix(ar1_three()));
    const Vector lam = b.eigen_weights();
    CHECK(std::abs(lam(0) - 1.84) < 0.005);
    CHECK(std::abs(lam(1) - 0.75) < 0.005);
    CHECK(std::abs(lam(2) - 0.41) < 0.005);
}

TEST_CASE("round trip gram(eigen_basis(R)) = R for random PSD R, including rank-deficient") {
    RandomStream s(17);
    for (int trial = 0; trial < 30; ++trial) {
        const Index n = 1 + static_cast<Index>(s.next_u64() % 30);
        const Index rank = 1 + static_cast<Index>(s.next_u64() % static_cast<std::uint64_t>(n));
        const Matrix r = random_psd(s, n, rank);
        const double tol = 1e-10 * std::max(1.0, r.cwiseAbs().maxCoeff());
        CHECK((gram(eigen_basis(SymMatrix(r))).matrix() - r).cwiseAbs().maxCoeff() < tol);
        CHECK((gram(eigenvector_basis(SymMatrix(r))).matrix() - r).cwiseAbs().maxCoeff() < tol);
    }
}

TEST_CASE("eigen basis from coordinates evaluates back onto the training rows") {
    const Coordinates c(std::vector<double>{0.0, 0.7, 1.1, 2.0, 3.4});
    const CorrelationModel model(Family::exponential, 1.2);
    const auto b = eigen_basis(c, model);
    CHECK((b.evaluate(c) - b.matrix()).cwiseAbs().maxCoeff() < 1e-10);
    const auto v = eigenvector_basis(c, model);
    CHECK((v.evaluate(c) - v.matrix()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("gaussian_kernel_basis") {
    const Coordinates pts(std::vector<double>{0.0, 1.0, 2.0});
    const Coordinates knots(std::vector<double>{0.0, 3.0});
    const auto b = gaussian_kernel_basis(pts, knots, 2.0);
    CHECK(b.matrix()(0, 0) == 1.0);
    CHECK(std::abs(b.matrix()(1, 0) - std::exp(-1.0)) < 1e-15);
    CHECK(b.columns()[1].knot.value()(0) == 3.0);

    const auto many = gaussian_kernel_basis(Coordinates(linspace(0, 100, 51)), Coordinates(linspace(0, 100, 17)), 50.0);
    CHECK(many.cols() == 17);

    CHECK_THROWS_AS(gaussian_kernel_basis(pts, Coordinates(Matrix(0, 1)), 1.0), InvalidKnots);
    CHECK_THROWS_AS(gaussian_kernel_basis(pts, knots, 0.0), InvalidInput);

    // Kernel entries equal the gaussian correlation at phi / 2.
    for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 2; ++j)
            CHECK(b.matrix()(i, j) ==
                  corr_value(pts.distance(i, knots, j), CorrelationModel(Family::gaussian, 1.0)));
}

TEST_CASE("uniform_kernel_basis") {
    const Coordinates knots(linspace(1, 20, 20));
    const auto b = uniform_kernel_basis(Coordinates(linspace(1, 20, 20)), knots, 2.0);
    CHECK(b.matrix()(4, 4) == 1.0);
    for (Index i = 0; i < 20; ++i) CHECK((b.matrix().row(i).array() != 0.0).count() <= 3);

    const auto far = uniform_kernel_basis(Coordinates(std::vector<double>{0.0}), Coordinates(std::vector<double>{2.0}), 2.0);
    CHECK(far.matrix()(0, 0) == 0.0);
    const auto edge = uniform_kernel_basis(Coordinates(std::vector<double>{0.0}), Coordinates(std::vector<double>{1.0}), 2.0);
    CHECK(edge.matrix()(0, 0) == 1.0);
    CHECK_THROWS_AS(uniform_kernel_basis(knots, Coordinates(Matrix(0, 1)), 1.0), InvalidKnots);
}

TEST_CASE("grouping_basis and compound symmetry") {
    const auto b = grouping_basis({"a", "a", "b", "b", "c", "c"});
    Matrix z(6, 3);
    z << 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 1;
    CHECK(b.matrix() == z);
    Matrix r = Matrix::Zero(6, 6);
    for (int g = 0; g < 3; ++g) r.block(2 * g, 2 * g, 2, 2).setOnes();
    CHECK(gram(b).matrix() == r);
    CHECK(b.matrix().rowwise().sum() == Vector::Ones(6));

    const auto one = grouping_basis({"x", "x", "x"});
    CHECK(one.cols() == 1);
    CHECK(one.matrix() == Matrix::Ones(3, 1));

    const auto order = grouping_basis({"z", "a", "z"});
    CHECK(order.columns()[0].label == "z");
    CHECK_FALSE(order.can_evaluate());
    CHECK_THROWS_AS(order.evaluate(Coordinates(std::vector<double>{1.0})), InvalidInput);
}

TEST_CASE("predictive_process_basis") {
    const Coordinates pts(std::vector<double>{0.0, 0.4, 1.3, 2.2, 3.0, 4.5});
    const CorrelationModel model(Family::exponential, 1.5);
    SUBCASE("knots equal the data") {
        const auto b = predictive_process_basis(pts, pts, model);
        CHECK((b.matrix() - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((gram(b).matrix() - corr_matrix(pts, model).matrix()).cwiseAbs().maxCoeff() < 1e-10);
    }
    SUBCASE("fewer knots never exceed unit variance") {
        const auto b = predictive_process_basis(pts, Coordinates(std::vector<double>{0.5, 2.5}), model);
        CHECK((gram(b).matrix().diagonal().array() <= 1.0 + 1e-8).all());
        CHECK(b.coefficient_covariance() == CoefficientCovariance::knot_correlated);
    }
    SUBCASE("50 grid knots") {
        RandomStream s(2);
        Matrix p(80, 2);
        for (Index i = 0; i < 80; ++i) p(i, 0) = s.next_uniform(), p(i, 1) = s.next_uniform();
        const Coordinates c(p);
        const auto b = predictive_process_basis(c, default_knots(c, 50), CorrelationModel(Family::exponential, 0.3));
        CHECK(b.cols() == 50);
        CHECK((gram(b).matrix().diagonal().array() <= 1.0 + 1e-8).all());
    }
    SUBCASE("duplicate knots") {
        CHECK_THROWS_AS(predictive_process_basis(pts, Coordinates(std::vector<double>{1.0, 1.0}), model), InvalidKnots);
    }
}

TEST_CASE("predictive-process shrinkage holds on random small instances") {
    RandomStream s(44);
    for (int trial = 0; trial < 20; ++trial) {
        const Index n = 5 + static_cast<Index>(s.next_u64() % 25);
        const Index m = 1 + static_cast<Index>(s.next_u64() % 8);
        Matrix p(n, 2), k(m, 2);
        for (Index i = 0; i < n; ++i) p(i, 0) = s.next_uniform(), p(i, 1) = s.next_uniform();
        for (Index i = 0; i < m; ++i) k(i, 0) = s.next_uniform(), k(i, 1) = s.next_uniform();
        const CorrelationModel model(s.next_uniform() < 0.5 ? Family::exponential : Family::gaussian,
                                     0.05 + 0.5 * s.next_uniform());
        const auto b = predictive_process_basis(Coordinates(p), Coordinates(k), model);
        const Vector implied = gram(b).matrix().diagonal();
        const Vector full = corr_matrix(Coordinates(p), model).matrix().diagonal();
        CHECK((implied.array() <= full.array() + 1e-8).all());
    }
}

TEST_CASE("gram of the identity and parallel kernel builders") {
    CHECK(gram(BasisExpansion(Matrix::Identity(3, 3),
                              std::vector<BasisColumn>(3, BasisColumn{BasisKind::eigen, "e", {}, {}, {}})))
              .matrix() == Matrix::Identity(3, 3));
    RandomStream s(9);
    Matrix p(200, 2), k(30, 2);
    for (Index i = 0; i < 200; ++i) p(i, 0) = s.next_uniform(), p(i, 1) = s.next_uniform();
    for (Index i = 0; i < 30; ++i) k(i, 0) = s.next_uniform(), k(i, 1) = s.next_uniform();
    CHECK(gaussian_kernel_matrix(Coordinates(p), Coordinates(k), 0.1) ==
          serial::gaussian_kernel_matrix(Coordinates(p), Coordinates(k), 0.1));
    CHECK(uniform_kernel_matrix(Coordinates(p), Coordinates(k), 0.3) ==
          serial::uniform_kernel_matrix(Coordinates(p), Coordinates(k), 0.3));
}
