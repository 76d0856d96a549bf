#pragma once

#include <map>
#include <optional>
#include <vector>

#include "autobasis/basis.hpp"
#include "autobasis/numkernel.hpp"

namespace autobasis {

/// Sample autocorrelation at lags 0..max_lag, mean-centred with the biased
/// 1/n normalisation. Requires max_lag < n/2; constant input throws UndefinedAcf.
std::map<Index, double> residual_acf(const Vector& residuals, Index max_lag);

/// Squared correlation of every basis column (rows) against every covariate
/// column (cols). Pairs involving a zero-variance column are NaN.
Matrix collinearity_r2(const BasisExpansion& z, const Matrix& x);

struct PairwiseR2 {
    double value = 0.0;
    Index first = -1;
    Index second = -1;
    std::vector<Index> zero_variance_columns;  // excluded from the maximum
};

/// Largest squared correlation over pairs of basis columns.
PairwiseR2 max_pairwise_r2(const BasisExpansion& z);

/// Ratio of extreme singular values of a matrix.
double condition_number(const Matrix& m);

struct DiagnosticsReport {
    std::map<Index, double> residual_acf;
    Matrix collinearity_r2;
    double max_pairwise_basis_r2 = 0.0;
    double condition_number = 0.0;
    /// Basis column with the largest R^2 against any covariate.
    Index strongest_basis_column = -1;
    Index strongest_covariate = -1;
    double strongest_r2 = 0.0;
};

/// Builds the report; x_for_collinearity should omit the intercept column.
DiagnosticsReport diagnose(const Vector& residuals, Index max_lag, const std::optional<BasisExpansion>& basis,
                           const Matrix& x_for_collinearity);

}  // namespace autobasis
