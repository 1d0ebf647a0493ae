#include "theta_stationary/reference.hpp"

#include "theta_stationary/errors.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>

namespace theta_stationary {

namespace {

constexpr double kQuadratureTol = 1e-14;

template <class F>
double adaptive_integral(F&& f, double a, double b) {
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 20, kQuadratureTol);
}

}  // namespace

ReferenceDistribution ReferenceDistribution::normal(double mean, double variance) {
    if (!(variance > 0.0) || !std::isfinite(mean) || !std::isfinite(variance)) {
        throw ConstraintViolation("normal reference needs finite mean and positive variance");
    }
    ReferenceDistribution r;
    r.kind_ = ReferenceKind::Normal;
    r.name_ = "normal";
    r.mean_ = mean;
    r.variance_ = variance;
    r.first_moment_ = mean;
    r.raw_second_moment_ = variance + mean * mean;
    return r;
}

ReferenceDistribution ReferenceDistribution::gibbs(std::function<double(double)> potential, double lower,
                                                   double upper, std::string name, std::size_t cells) {
    if (!(lower < upper) || !std::isfinite(lower) || !std::isfinite(upper)) {
        throw ConstraintViolation("gibbs reference needs a finite support lower < upper");
    }
    if (cells < 2) throw ConstraintViolation("gibbs reference needs at least two grid cells");

    ReferenceDistribution r;
    r.kind_ = ReferenceKind::Gibbs1D;
    r.name_ = std::move(name);
    r.potential_ = std::move(potential);
    r.lower_ = lower;
    r.upper_ = upper;
    const auto& u = r.potential_;
    const auto weight = [&u](double x) { return std::exp(-u(x)); };

    r.z_ = adaptive_integral(weight, lower, upper);
    if (!(r.z_ > 0.0) || !std::isfinite(r.z_)) throw ConstraintViolation("gibbs normalization is not positive");

    r.nodes_.resize(cells + 1);
    r.cumulative_.resize(cells + 1);
    const double width = (upper - lower) / static_cast<double>(cells);
    for (std::size_t i = 0; i <= cells; ++i) r.nodes_[i] = lower + width * static_cast<double>(i);
    r.nodes_.back() = upper;
    r.cumulative_[0] = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
        const double mass = boost::math::quadrature::gauss<double, 20>::integrate(weight, r.nodes_[i], r.nodes_[i + 1]);
        r.cumulative_[i + 1] = r.cumulative_[i] + mass;
    }
    const double total = r.cumulative_.back();
    for (double& c : r.cumulative_) c /= total;
    r.cumulative_.back() = 1.0;

    r.first_moment_ = adaptive_integral([&](double x) { return x * weight(x); }, lower, upper) / r.z_;
    r.raw_second_moment_ = adaptive_integral([&](double x) { return x * x * weight(x); }, lower, upper) / r.z_;
    r.mean_ = r.first_moment_;
    r.variance_ = r.raw_second_moment_ - r.first_moment_ * r.first_moment_;
    return r;
}

double ReferenceDistribution::density(double x) const {
    if (kind_ == ReferenceKind::Normal) {
        const double s2 = variance_;
        const double d = x - mean_;
        return std::exp(-0.5 * d * d / s2) / std::sqrt(2.0 * M_PI * s2);
    }
    if (x < lower_ || x > upper_) return 0.0;
    return std::exp(-potential_(x)) / z_;
}

double ReferenceDistribution::cdf(double x) const {
    if (kind_ == ReferenceKind::Normal) {
        return 0.5 * std::erfc(-(x - mean_) / std::sqrt(2.0 * variance_));
    }
    if (std::isnan(x)) return x;
    if (x <= lower_) return 0.0;
    if (x >= upper_) return 1.0;
    const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), x);
    const std::size_t i = static_cast<std::size_t>(std::distance(nodes_.begin(), it)) - 1;
    const double x0 = nodes_[i];
    const double x1 = nodes_[i + 1];
    const double w = x1 - x0;
    const double t = (x - x0) / w;
    const double f0 = cumulative_[i];
    const double f1 = cumulative_[i + 1];
    // Hermite basis with slopes equal to the (normalized) density at the nodes.
    const double total_scale = z_;
    const double p0 = std::exp(-potential_(x0)) / total_scale;
    const double p1 = std::exp(-potential_(x1)) / total_scale;
    const double t2 = t * t;
    const double t3 = t2 * t;
    const double value = (2 * t3 - 3 * t2 + 1) * f0 + (t3 - 2 * t2 + t) * w * p0 + (-2 * t3 + 3 * t2) * f1 +
                         (t3 - t2) * w * p1;
    return std::clamp(value, f0, f1);
}

double ReferenceDistribution::quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw ConstraintViolation("quantile needs p in (0, 1)");
    if (kind_ == ReferenceKind::Normal) {
        return boost::math::quantile(boost::math::normal_distribution<double>(mean_, std::sqrt(variance_)), p);
    }
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), p);
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(std::distance(cumulative_.begin(), it)),
                                                cumulative_.size() - 1) - 1;
    double lo = nodes_[i];
    double hi = nodes_[i + 1];
    double x = lo + (hi - lo) * (p - cumulative_[i]) / std::max(cumulative_[i + 1] - cumulative_[i], 1e-300);
    // Safeguarded Newton on the interpolated CDF.
    for (int iter = 0; iter < 100; ++iter) {
        const double f = cdf(x) - p;
        if (f == 0.0) break;
        (f > 0.0 ? hi : lo) = x;
        const double slope = density(x);
        double next = slope > 0.0 ? x - f / slope : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= 1e-15 * std::max(1.0, std::abs(x))) {
            x = next;
            break;
        }
        x = next;
    }
    return x;
}

double ReferenceDistribution::mean() const { return first_moment_; }

double ReferenceDistribution::second_moment() const { return raw_second_moment_; }

ReferenceDistribution quartic_gibbs() {
    // Tails beyond |x| = 8 carry less than exp(-8^4/4) ~ 1e-445 of the mass.
    auto r = ReferenceDistribution::gibbs([](double x) { return 0.5 * x * x + 0.25 * x * x * x * x; }, -8.0, 8.0,
                                          "quartic_gibbs");
    r.kind_ = ReferenceKind::QuarticGibbs;
    return r;
}

ReferenceDistribution reference_for(const StationaryDescriptor& descriptor) {
    switch (descriptor.kind) {
        case StationaryKind::Normal:
            return ReferenceDistribution::normal(descriptor.mean, descriptor.variance);
        case StationaryKind::QuarticGibbs:
            return quartic_gibbs();
    }
    throw LookupError("unknown stationary kind");
}

}  // namespace theta_stationary
