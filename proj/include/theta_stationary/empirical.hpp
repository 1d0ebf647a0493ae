#pragma once

#include "theta_stationary/reference.hpp"

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace theta_stationary {

/// Sorted, finite, non-empty one-dimensional sample.
class EmpiricalDistribution {
public:
    explicit EmpiricalDistribution(std::vector<double> samples);

    std::size_t size() const noexcept { return samples_.size(); }
    std::span<const double> samples() const noexcept { return samples_; }
    double min() const noexcept { return samples_.front(); }
    double max() const noexcept { return samples_.back(); }

private:
    std::vector<double> samples_;
};

/// Points in R^dim stored row-major; used for density estimation only.
struct PointCloud {
    std::size_t dim = 1;
    std::vector<double> data;

    std::size_t size() const noexcept { return dim == 0 ? 0 : data.size() / dim; }
    std::span<const double> point(std::size_t i) const { return {data.data() + i * dim, dim}; }
};

/// Fraction of samples <= x.
double ecdf(const EmpiricalDistribution& dist, double x);

struct Moments {
    std::vector<double> mean;
    double second_moment = 0.0;  ///< (1/n) sum |x_i|^2
    std::vector<double> variance; ///< unbiased, per coordinate
};

/// Throws EmptySampleError when fewer than two samples are given.
Moments moments(const EmpiricalDistribution& dist);
Moments moments(const PointCloud& cloud);

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;
};

/// Kolmogorov's limiting survival function Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2),
/// truncated once a term drops below 1e-12 and clamped to [0, 1].
double kolmogorov_survival(double lambda);

/// One-sample two-sided K-S test with the asymptotic p-value Q(sqrt(n) D).
KsResult ks_test(const EmpiricalDistribution& dist, const ReferenceDistribution& ref);

/// W1 = integral |F_p - F_q| dx; for equal sizes this is (1/n) sum |x_(i) - y_(i)|.
double wasserstein1_1d(const EmpiricalDistribution& p, const EmpiricalDistribution& q);

/// min(W1, 2): an upper bound for the bounded-Lipschitz distance d_L, whose
/// test functions are 1-Lipschitz (giving W1) and bounded by 1 (giving 2).
double bl_distance_upper(const EmpiricalDistribution& p, const EmpiricalDistribution& q);

/// Deterministic sample F^{-1}((i - 0.5)/n), i = 1..n.
EmpiricalDistribution quantile_sample(const ReferenceDistribution& ref, std::size_t n);

struct Range {
    double lower = 0.0;
    double upper = 1.0;
};

/// Histogram density on a regular grid. Samples outside the range are
/// ignored; masses are normalized over the samples inside it, so that
/// sum(density * bin_area) = 1.
struct DensityTable {
    std::size_t dim = 1;
    std::size_t bins = 1;             ///< per axis
    std::vector<Range> ranges;        ///< one per axis
    std::vector<double> density;      ///< row-major over axes (x fastest in 1D; [ix * bins + iy] in 2D)
    std::size_t counted = 0;
    std::size_t dropped = 0;

    double bin_width(std::size_t axis) const;
    double bin_area() const;
    double center(std::size_t axis, std::size_t index) const;
    double mass(std::size_t cell) const { return density[cell] * bin_area(); }
};

DensityTable histogram_density(const EmpiricalDistribution& dist, std::size_t bins, Range range);
DensityTable histogram_density(const PointCloud& cloud, std::size_t bins, std::span<const Range> ranges);

/// sum over cells of |mass_a - mass_b|; tables must share the grid.
double l1_mass_distance(const DensityTable& a, const DensityTable& b);

/// Smallest box containing every point of every cloud.
std::vector<Range> bounding_ranges(std::span<const PointCloud> clouds);

}  // namespace theta_stationary
