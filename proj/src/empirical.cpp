#include "theta_stationary/empirical.hpp"

#include "theta_stationary/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

namespace theta_stationary {

EmpiricalDistribution::EmpiricalDistribution(std::vector<double> samples) : samples_(std::move(samples)) {
    if (samples_.empty()) throw EmptySampleError("empirical distribution needs at least one sample");
    for (double x : samples_) {
        if (!std::isfinite(x)) throw ConstraintViolation("empirical distribution samples must be finite");
    }
    std::sort(samples_.begin(), samples_.end());
}

double ecdf(const EmpiricalDistribution& dist, double x) {
    const auto s = dist.samples();
    const auto count = std::upper_bound(s.begin(), s.end(), x) - s.begin();
    return static_cast<double>(count) / static_cast<double>(s.size());
}

Moments moments(const EmpiricalDistribution& dist) {
    PointCloud cloud{1, {dist.samples().begin(), dist.samples().end()}};
    return moments(cloud);
}

Moments moments(const PointCloud& cloud) {
    const std::size_t n = cloud.size();
    if (n < 2) throw EmptySampleError("moments need at least two samples");
    const std::size_t d = cloud.dim;
    Moments m;
    m.mean.assign(d, 0.0);
    m.variance.assign(d, 0.0);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = cloud.point(i);
        for (std::size_t j = 0; j < d; ++j) {
            m.mean[j] += x[j];
            sq += x[j] * x[j];
        }
    }
    const double nn = static_cast<double>(n);
    for (double& v : m.mean) v /= nn;
    m.second_moment = sq / nn;
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = cloud.point(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double dev = x[j] - m.mean[j];
            m.variance[j] += dev * dev;
        }
    }
    for (double& v : m.variance) v /= nn - 1.0;
    return m;
}

double kolmogorov_survival(double lambda) {
    // Below 0.1 the series equals 1 to double precision (1 - Q < 1e-40).
    if (!(lambda >= 0.1)) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int j = 1; j < 100000; ++j) {
        const double term = std::exp(-2.0 * j * j * lambda * lambda);
        sum += sign * term;
        if (term < 1e-12) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_test(const EmpiricalDistribution& dist, const ReferenceDistribution& ref) {
    const auto s = dist.samples();
    const double n = static_cast<double>(s.size());
    double d = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double f = ref.cdf(s[i]);
        const double above = static_cast<double>(i + 1) / n - f;
        const double below = f - static_cast<double>(i) / n;
        d = std::max({d, std::abs(above), std::abs(below)});
    }
    KsResult r;
    r.statistic = d;
    r.n = s.size();
    r.p_value = d == 0.0 ? 1.0 : kolmogorov_survival(std::sqrt(n) * d);
    return r;
}

double wasserstein1_1d(const EmpiricalDistribution& p, const EmpiricalDistribution& q) {
    const auto a = p.samples();
    const auto b = q.samples();
    if (a.size() == b.size()) {
        double total = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
        return total / static_cast<double>(a.size());
    }
    // Sweep the merged support; |F_p - F_q| is constant between breakpoints.
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double total = 0.0;
    double prev = std::min(a.front(), b.front());
    while (i < a.size() || j < b.size()) {
        const double next = (j >= b.size() || (i < a.size() && a[i] <= b[j])) ? a[i] : b[j];
        total += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (next - prev);
        while (i < a.size() && a[i] == next) ++i;
        while (j < b.size() && b[j] == next) ++j;
        prev = next;
    }
    return total;
}

double bl_distance_upper(const EmpiricalDistribution& p, const EmpiricalDistribution& q) {
    return std::min(wasserstein1_1d(p, q), 2.0);
}

EmpiricalDistribution quantile_sample(const ReferenceDistribution& ref, std::size_t n) {
    if (n == 0) throw EmptySampleError("quantile sample needs n >= 1");
    std::vector<double> xs(n);
    const double nn = static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) xs[i] = ref.quantile((static_cast<double>(i) + 0.5) / nn);
    return EmpiricalDistribution(std::move(xs));
}

double DensityTable::bin_width(std::size_t axis) const {
    const auto& r = ranges.at(axis);
    return (r.upper - r.lower) / static_cast<double>(bins);
}

double DensityTable::bin_area() const {
    double area = 1.0;
    for (std::size_t axis = 0; axis < dim; ++axis) area *= bin_width(axis);
    return area;
}

double DensityTable::center(std::size_t axis, std::size_t index) const {
    return ranges.at(axis).lower + (static_cast<double>(index) + 0.5) * bin_width(axis);
}

namespace {

std::optional<std::size_t> bin_index(double x, const Range& r, std::size_t bins) {
    if (!(x >= r.lower && x <= r.upper)) return std::nullopt;
    const double w = (r.upper - r.lower) / static_cast<double>(bins);
    const auto idx = static_cast<std::size_t>(std::floor((x - r.lower) / w));
    return std::min(idx, bins - 1);
}

void check_grid(std::size_t bins, std::span<const Range> ranges) {
    if (bins == 0) throw ConstraintViolation("histogram needs at least one bin");
    for (const auto& r : ranges) {
        if (!(r.lower < r.upper) || !std::isfinite(r.lower) || !std::isfinite(r.upper)) {
            throw ConstraintViolation("histogram range is empty");
        }
    }
}

void normalize(DensityTable& table) {
    if (table.counted == 0) throw EmptySampleError("no samples fall inside the histogram range");
    const double scale = 1.0 / (static_cast<double>(table.counted) * table.bin_area());
    for (double& v : table.density) v *= scale;
}

}  // namespace

DensityTable histogram_density(const EmpiricalDistribution& dist, std::size_t bins, Range range) {
    const Range ranges[] = {range};
    check_grid(bins, ranges);
    DensityTable t;
    t.dim = 1;
    t.bins = bins;
    t.ranges = {range};
    t.density.assign(bins, 0.0);
    for (double x : dist.samples()) {
        if (const auto i = bin_index(x, range, bins)) {
            t.density[*i] += 1.0;
            ++t.counted;
        } else {
            ++t.dropped;
        }
    }
    normalize(t);
    return t;
}

DensityTable histogram_density(const PointCloud& cloud, std::size_t bins, std::span<const Range> ranges) {
    if (cloud.dim != 2 && cloud.dim != 1) throw ConstraintViolation("histograms support 1D and 2D samples");
    if (ranges.size() != cloud.dim) throw ConstraintViolation("one range per axis is required");
    check_grid(bins, ranges);
    DensityTable t;
    t.dim = cloud.dim;
    t.bins = bins;
    t.ranges.assign(ranges.begin(), ranges.end());
    t.density.assign(cloud.dim == 2 ? bins * bins : bins, 0.0);
    for (std::size_t p = 0; p < cloud.size(); ++p) {
        const auto x = cloud.point(p);
        const auto ix = bin_index(x[0], ranges[0], bins);
        if (cloud.dim == 1) {
            if (ix) {
                t.density[*ix] += 1.0;
                ++t.counted;
            } else {
                ++t.dropped;
            }
            continue;
        }
        const auto iy = bin_index(x[1], ranges[1], bins);
        if (ix && iy) {
            t.density[*ix * bins + *iy] += 1.0;
            ++t.counted;
        } else {
            ++t.dropped;
        }
    }
    normalize(t);
    return t;
}

double l1_mass_distance(const DensityTable& a, const DensityTable& b) {
    if (a.dim != b.dim || a.bins != b.bins || a.density.size() != b.density.size()) {
        throw ConstraintViolation("density tables must share a grid");
    }
    for (std::size_t axis = 0; axis < a.dim; ++axis) {
        if (a.ranges[axis].lower != b.ranges[axis].lower || a.ranges[axis].upper != b.ranges[axis].upper) {
            throw ConstraintViolation("density tables must share a grid");
        }
    }
    double total = 0.0;
    for (std::size_t i = 0; i < a.density.size(); ++i) total += std::abs(a.mass(i) - b.mass(i));
    return total;
}

std::vector<Range> bounding_ranges(std::span<const PointCloud> clouds) {
    if (clouds.empty()) throw EmptySampleError("bounding box of no samples");
    const std::size_t d = clouds.front().dim;
    std::vector<Range> out(d, Range{kInfinity, -kInfinity});
    for (const auto& cloud : clouds) {
        if (cloud.dim != d) throw ConstraintViolation("clouds differ in dimension");
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const auto x = cloud.point(i);
            for (std::size_t j = 0; j < d; ++j) {
                out[j].lower = std::min(out[j].lower, x[j]);
                out[j].upper = std::max(out[j].upper, x[j]);
            }
        }
    }
    for (auto& r : out) {
        if (!(r.lower <= r.upper)) throw EmptySampleError("bounding box of no samples");
        if (r.lower == r.upper) {
            r.lower -= 0.5;
            r.upper += 0.5;
        }
    }
    return out;
}

}  // namespace theta_stationary
