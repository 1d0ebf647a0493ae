#pragma once

#include "theta_stationary/model.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace theta_stationary {

enum class ReferenceKind { Normal, QuarticGibbs, Gibbs1D };

/// A one-dimensional law with a continuous CDF.
///
/// Normal is closed form. Gibbs laws (density proportional to exp(-U(x)))
/// are normalized by adaptive Gauss-Kronrod quadrature on a finite support
/// and carry a cumulative table on a uniform grid; the CDF between nodes is
/// the cubic Hermite interpolant using the exact density as the slope.
class ReferenceDistribution {
public:
    static ReferenceDistribution normal(double mean, double variance);

    /// density ∝ exp(-potential(x)) on [lower, upper]; mass outside must be negligible.
    static ReferenceDistribution gibbs(std::function<double(double)> potential, double lower, double upper,
                                       std::string name = "gibbs", std::size_t cells = 4096);

    ReferenceKind kind() const noexcept { return kind_; }
    const std::string& name() const noexcept { return name_; }

    double density(double x) const;
    double cdf(double x) const;
    /// Inverse CDF for p in (0, 1).
    double quantile(double p) const;

    /// Z = integral of exp(-U); 1 for Normal.
    double normalization() const noexcept { return z_; }
    double mean() const;
    double second_moment() const;
    double variance() const { const double m = mean(); return second_moment() - m * m; }

    /// Support used by the quadrature (the whole line for Normal).
    double lower() const noexcept { return lower_; }
    double upper() const noexcept { return upper_; }

    /// CDF values at the cached grid nodes (empty for Normal).
    const std::vector<double>& grid() const noexcept { return nodes_; }
    const std::vector<double>& grid_cdf() const noexcept { return cumulative_; }

private:
    friend ReferenceDistribution quartic_gibbs();
    ReferenceDistribution() = default;

    ReferenceKind kind_ = ReferenceKind::Normal;
    std::string name_;
    double mean_ = 0.0;
    double variance_ = 1.0;
    double z_ = 1.0;
    double lower_ = -kInfinity;
    double upper_ = kInfinity;
    double first_moment_ = 0.0;
    double raw_second_moment_ = 1.0;
    std::function<double(double)> potential_;
    std::vector<double> nodes_;
    std::vector<double> cumulative_;
};

/// exp(-x^2/2 - x^4/4), the stationary law of dx = -(x + x^3)/2 dt + dB.
ReferenceDistribution quartic_gibbs();

/// Builds the reference law for a problem's analytic stationary descriptor.
ReferenceDistribution reference_for(const StationaryDescriptor& descriptor);

}  // namespace theta_stationary
