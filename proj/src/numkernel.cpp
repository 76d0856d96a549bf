#include "autobasis/numkernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "autobasis/error.hpp"

namespace autobasis {

SymMatrix::SymMatrix(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() == 0) {
        throw ContractViolation("SymMatrix must be square and non-empty");
    }
    if (!m_.allFinite()) {
        throw InvalidInput("SymMatrix has non-finite entries");
    }
    const Index n = m_.rows();
    for (Index j = 0; j < n; ++j) {
        for (Index i = j + 1; i < n; ++i) {
            if (m_(i, j) != m_(j, i)) {
                throw ContractViolation("SymMatrix is not symmetric at (" + std::to_string(i) + "," +
                                        std::to_string(j) + ")");
            }
        }
    }
}

SymMatrix SymMatrix::symmetrize(const Matrix& m) {
    if (m.rows() != m.cols()) throw ContractViolation("symmetrize needs a square matrix");
    Matrix s = 0.5 * (m + m.transpose());
    return SymMatrix(std::move(s));
}

SymMatrix SymMatrix::identity(Index n) { return SymMatrix(Matrix::Identity(n, n)); }

EigenPair sym_eigen(const SymMatrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(m.matrix());
    if (solver.info() != Eigen::Success) {
        throw NumericalError("symmetric eigensolver did not converge");
    }
    const Index n = m.order();
    EigenPair out;
    out.values.resize(n);
    out.vectors.resize(n, n);
    // Eigen returns ascending order; a stable descending sort keeps exact
    // ties (the identity, say) in their original column order.
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return solver.eigenvalues()(a) > solver.eigenvalues()(b);
    });
    for (Index k = 0; k < n; ++k) {
        const Index src = order[static_cast<std::size_t>(k)];
        out.values(k) = solver.eigenvalues()(src);
        Vector v = solver.eigenvectors().col(src);
        Index arg = 0;
        double best = -1.0;
        for (Index i = 0; i < n; ++i) {
            if (std::abs(v(i)) > best) {
                best = std::abs(v(i));
                arg = i;
            }
        }
        if (v(arg) < 0.0) v = -v;
        out.vectors.col(k) = v;
    }
    return out;
}

double CholeskyResult::log_det() const {
    const Matrix& l = llt.matrixLLT();
    double s = 0.0;
    for (Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
    return 2.0 * s;
}

namespace {

bool factor_ok(const Eigen::LLT<Matrix>& llt) {
    if (llt.info() != Eigen::Success) return false;
    const auto d = llt.matrixLLT().diagonal();
    return d.allFinite() && (d.array() > 0.0).all();
}

}  // namespace

CholeskyResult spd_factor(const Matrix& a, std::string_view name) {
    CholeskyResult out;
    out.llt.compute(a);
    if (factor_ok(out.llt)) return out;

    const double ridge = 1e-10 * std::max(a.diagonal().maxCoeff(), 0.0);
    Matrix jittered = a;
    jittered.diagonal().array() += ridge;
    out.llt.compute(jittered);
    out.jitter_applied = true;
    if (ridge <= 0.0 || !factor_ok(out.llt)) throw SingularMatrix(std::string(name));
    return out;
}

SolveResult spd_solve(const SymMatrix& a, const Matrix& b, std::string_view name) {
    if (b.rows() != a.order()) throw InvalidInput("spd_solve: right-hand side has wrong row count");
    auto chol = spd_factor(a.matrix(), name);
    SolveResult out;
    out.x = chol.llt.solve(b);
    out.jitter_applied = chol.jitter_applied;
    if (!out.x.allFinite()) throw SingularMatrix(std::string(name));
    return out;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_sf(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw InvalidInput("normal_quantile: p must lie in (0, 1)");
    // Phi^{-1}(p) = -sqrt(2) * erfc^{-1}(2p); erfc_inv keeps precision in both tails.
    return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

RandomStream RandomStream::restore(std::uint64_t seed, std::uint64_t position) {
    RandomStream s(seed);
    s.engine_.discard(position);
    s.position_ = position;
    return s;
}

std::uint64_t RandomStream::next_u64() {
    ++position_;
    return engine_();
}

double RandomStream::next_uniform() {
    const std::uint64_t bits = next_u64() >> 11;  // 53 significant bits
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double RandomStream::next_gaussian() { return normal_quantile(next_uniform()); }

}  // namespace autobasis
