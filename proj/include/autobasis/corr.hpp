#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "autobasis/numkernel.hpp"

namespace autobasis {

enum class Family { ar1, gaussian, exponential };

std::string_view to_string(Family f);
Family parse_family(std::string_view name);

/// Correlation family plus its range/decay parameter. For ar1 phi is the
/// lag-one correlation; for gaussian and exponential it carries coordinate
/// units (squared units for gaussian).
struct CorrelationModel {
    Family family = Family::exponential;
    double phi = 1.0;

    CorrelationModel() = default;
    CorrelationModel(Family f, double p);

    /// Throws InvalidInput when phi lies outside the family's domain.
    void validate() const;
};

/// Points in a 1-D or multi-dimensional coordinate space, one row per point.
class Coordinates {
public:
    Coordinates() = default;
    explicit Coordinates(Matrix points);
    explicit Coordinates(const std::vector<double>& line);

    Index size() const noexcept { return points_.rows(); }
    Index dim() const noexcept { return points_.cols(); }
    const Matrix& points() const noexcept { return points_; }
    auto point(Index i) const { return points_.row(i); }

    double distance(Index i, const Coordinates& other, Index j) const;
    /// Largest pairwise distance among the points (0 for a single point).
    double max_distance() const;

private:
    Matrix points_;
};

double corr_value(double d, const CorrelationModel& model);

/// n x n correlation matrix; entries are computed once per pair and mirrored,
/// so the result is exactly symmetric. Parallelized over rows with OpenMP.
SymMatrix corr_matrix(const Coordinates& coords, const CorrelationModel& model);

/// n x m correlation between data points and knots.
Matrix cross_corr_matrix(const Coordinates& coords, const Coordinates& knots,
                         const CorrelationModel& model);

/// Equally spaced points over [lo, hi] with both endpoints; count >= 1.
std::vector<double> linspace(double lo, double hi, Index count);

/// Knots on a regular per-axis grid over the bounding box of coords.
/// For 1-D data this is `count` equally spaced points; for 2-D data the grid
/// is as close to square as possible with at least `count` points, then
/// trimmed to exactly `count` in row-major order.
Coordinates default_knots(const Coordinates& coords, Index count);

namespace serial {

// Single-threaded reference kernels. Tests hold the parallel versions to
// bit-equality against these; the bench target times both.
SymMatrix corr_matrix(const Coordinates& coords, const CorrelationModel& model);
Matrix cross_corr_matrix(const Coordinates& coords, const Coordinates& knots,
                         const CorrelationModel& model);

}  // namespace serial

}  // namespace autobasis
