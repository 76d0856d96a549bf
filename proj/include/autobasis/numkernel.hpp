#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

namespace autobasis {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Dense symmetric matrix. Construction rejects any entry pair that is not
/// bit-identical across the diagonal, and any non-finite entry.
class SymMatrix {
public:
    SymMatrix() = default;
    explicit SymMatrix(Matrix m);

    /// Averages m with its transpose first; use for products such as Z Z'
    /// whose triangles may differ in the last bit.
    static SymMatrix symmetrize(const Matrix& m);
    static SymMatrix identity(Index n);

    Index order() const noexcept { return m_.rows(); }
    const Matrix& matrix() const noexcept { return m_; }
    double operator()(Index i, Index j) const { return m_(i, j); }
    double max_abs() const { return m_.cwiseAbs().maxCoeff(); }

private:
    Matrix m_;
};

/// Eigenvalues in descending order with matching unit-norm columns.
struct EigenPair {
    Vector values;
    Matrix vectors;
};

/// Symmetric eigendecomposition. In each eigenvector the entry of largest
/// magnitude is made positive (lowest index wins ties).
EigenPair sym_eigen(const SymMatrix& m);

struct SolveResult {
    Matrix x;
    bool jitter_applied = false;
};

/// Solves A X = B for symmetric positive (semi-)definite A by Cholesky.
/// If the factorization fails, retries once with 1e-10 * max(diag A) added to
/// the diagonal. Throws SingularMatrix(name) if the retry also fails.
SolveResult spd_solve(const SymMatrix& a, const Matrix& b, std::string_view name = "A");

/// Cholesky factor with the same single-retry jitter policy as spd_solve.
struct CholeskyResult {
    Eigen::LLT<Matrix> llt;
    bool jitter_applied = false;

    double log_det() const;
};
CholeskyResult spd_factor(const Matrix& a, std::string_view name = "A");

double normal_cdf(double x);
/// Upper tail 1 - Phi(x), accurate for large x.
double normal_sf(double x);
double normal_quantile(double p);

/// Seeded stream of variates. Only the 64-bit Mersenne twister (whose output
/// sequence is fixed by the standard) and our own transforms are used, so a
/// given (seed, position) yields the same draws on every platform.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    /// Resume a stream that had consumed `position` raw words.
    static RandomStream restore(std::uint64_t seed, std::uint64_t position);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t position() const noexcept { return position_; }

    std::uint64_t next_u64();
    /// Uniform on the open interval (0, 1).
    double next_uniform();
    double next_gaussian();

private:
    std::uint64_t seed_;
    std::uint64_t position_ = 0;
    std::mt19937_64 engine_;
};

inline double next_gaussian(RandomStream& s) { return s.next_gaussian(); }

}  // namespace autobasis
