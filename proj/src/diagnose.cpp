#include "autobasis/diagnose.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "autobasis/error.hpp"

namespace autobasis {

std::map<Index, double> residual_acf(const Vector& residuals, Index max_lag) {
    const Index n = residuals.size();
    if (max_lag < 0 || 2 * max_lag >= n) throw InvalidInput("residual_acf needs 0 <= max_lag < n/2");
    const Vector c = residuals.array() - residuals.mean();
    const double c0 = c.squaredNorm();
    if (!(c0 > 0.0)) throw UndefinedAcf("autocorrelation is undefined for constant residuals");
    std::map<Index, double> acf;
    acf[0] = 1.0;
    for (Index k = 1; k <= max_lag; ++k) acf[k] = c.head(n - k).dot(c.tail(n - k)) / c0;
    return acf;
}

namespace {

// Squared Pearson correlation; NaN when either column is constant.
double r2(const Vector& a, const Vector& b) {
    const Vector ca = a.array() - a.mean();
    const Vector cb = b.array() - b.mean();
    const double va = ca.squaredNorm();
    const double vb = cb.squaredNorm();
    const double scale_a = a.squaredNorm();
    const double scale_b = b.squaredNorm();
    if (!(va > 1e-24 * std::max(scale_a, 1.0)) || !(vb > 1e-24 * std::max(scale_b, 1.0))) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    const double r = ca.dot(cb) / std::sqrt(va * vb);
    return std::clamp(r * r, 0.0, 1.0);
}

bool zero_variance(const Vector& a) { return std::isnan(r2(a, a)); }

}  // namespace

Matrix collinearity_r2(const BasisExpansion& z, const Matrix& x) {
    if (x.rows() != z.rows()) throw InvalidInput("basis and covariates disagree in row count");
    Matrix out(z.cols(), x.cols());
    for (Index j = 0; j < z.cols(); ++j)
        for (Index k = 0; k < x.cols(); ++k) out(j, k) = r2(z.matrix().col(j), x.col(k));
    return out;
}

PairwiseR2 max_pairwise_r2(const BasisExpansion& z) {
    if (z.cols() < 2) throw InvalidInput("max_pairwise_r2 needs at least two columns");
    PairwiseR2 res;
    std::vector<bool> skip(static_cast<std::size_t>(z.cols()), false);
    for (Index j = 0; j < z.cols(); ++j)
        if (zero_variance(z.matrix().col(j))) {
            skip[static_cast<std::size_t>(j)] = true;
            res.zero_variance_columns.push_back(j);
        }
    for (Index a = 0; a < z.cols(); ++a)
        for (Index b = a + 1; b < z.cols(); ++b) {
            if (skip[static_cast<std::size_t>(a)] || skip[static_cast<std::size_t>(b)]) continue;
            const double v = r2(z.matrix().col(a), z.matrix().col(b));
            if (res.first < 0 || v > res.value) res = {v, a, b, res.zero_variance_columns};
        }
    return res;
}

double condition_number(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(m);
    const auto& s = svd.singularValues();
    const double smin = s(s.size() - 1);
    return smin > 0.0 ? s(0) / smin : std::numeric_limits<double>::infinity();
}

DiagnosticsReport diagnose(const Vector& residuals, Index max_lag, const std::optional<BasisExpansion>& basis,
                           const Matrix& x_for_collinearity) {
    DiagnosticsReport rep;
    try {
        rep.residual_acf = residual_acf(residuals, max_lag);
    } catch (const UndefinedAcf&) {
        // Perfect fits leave nothing to correlate; report an empty ACF.
    }
    if (basis) {
        if (x_for_collinearity.cols() > 0) {
            rep.collinearity_r2 = collinearity_r2(*basis, x_for_collinearity);
            for (Index j = 0; j < rep.collinearity_r2.rows(); ++j)
                for (Index k = 0; k < rep.collinearity_r2.cols(); ++k) {
                    const double v = rep.collinearity_r2(j, k);
                    if (!std::isnan(v) && (rep.strongest_basis_column < 0 || v > rep.strongest_r2)) {
                        rep.strongest_r2 = v;
                        rep.strongest_basis_column = j;
                        rep.strongest_covariate = k;
                    }
                }
        }
        if (basis->cols() >= 2) rep.max_pairwise_basis_r2 = max_pairwise_r2(*basis).value;
        rep.condition_number = condition_number(basis->matrix());
    }
    return rep;
}

}  // namespace autobasis
