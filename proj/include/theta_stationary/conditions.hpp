#pragma once

#include "theta_stationary/model.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace theta_stationary {

/// Uniform points (and point pairs) in the box [lower, upper]^dim.
struct BoxSampler {
    double lower = -10.0;
    double upper = 10.0;
    std::uint64_t seed = 0;
};

/// Worst observed effective constant for one inequality.
///
/// Lipschitz-type checks report lhs / |x-y|^2; growth checks report
/// (lhs - offset) / |x|^2. A sample violates when lhs exceeds the bound's
/// right-hand side by more than 1e-12 relative.
struct ConditionCheck {
    std::string name;
    bool checked = false;
    double bound = 0.0;
    double worst_ratio = -kInfinity;
    double min_ratio = kInfinity;
    std::size_t violations = 0;
    std::vector<double> witness_x;
    std::vector<double> witness_y;

    bool pass() const noexcept { return violations == 0; }
};

struct ConditionReport {
    std::size_t samples = 0;
    std::vector<ConditionCheck> checks;
    bool pass = true;

    /// Throws LookupError for unknown names.
    const ConditionCheck& check(const std::string& name) const;
};

inline constexpr double kConditionRelTol = 1e-12;

/// Falsification test of the six coefficient inequalities on n sampled pairs.
/// drift_lipschitz and drift_growth are only checked for globally Lipschitz drifts.
ConditionReport check_conditions_sampled(const SdeProblem& problem, const CoefficientBounds& bounds,
                                         const BoxSampler& sampler, std::size_t n);

struct InequalitySides {
    double lhs = 0.0;
    double rhs = 0.0;
};

/// |x - b1 f(x)|^2 + 2 b1 a  vs  (1 - mu b1)/(1 - mu b2) (|x - b2 f(x)|^2 + 2 b2 a),  0 <= b1 <= b2.
InequalitySides dissipative_interpolation(const SdeProblem& problem, const CoefficientBounds& bounds,
                                          std::span<const double> x, double beta1, double beta2);

/// |x - y - l1 (f(x) - f(y))|  vs  (1 - k2 l1)/(1 - k2 l2) |x - y - l2 (f(x) - f(y))|,  0 <= l1 <= l2.
InequalitySides monotone_interpolation(const SdeProblem& problem, const CoefficientBounds& bounds,
                                       std::span<const double> x, std::span<const double> y, double lambda1,
                                       double lambda2);

struct AuxiliarySampler {
    BoxSampler box;
    double beta_max = 1.0;
    double lambda_max = 1.0;
};

struct AuxiliaryWitness {
    std::vector<double> x;
    std::vector<double> y;
    double first = 0.0;   ///< beta1 or lambda1
    double second = 0.0;  ///< beta2 or lambda2
};

inline constexpr double kAuxiliaryRelTol = 1e-10;

struct AuxiliaryReport {
    std::size_t samples = 0;
    /// min over samples of (rhs - lhs) / max(1, |rhs|)
    double worst_slack_dissipative = kInfinity;
    double worst_slack_monotone = kInfinity;
    std::optional<AuxiliaryWitness> witness_dissipative;
    std::optional<AuxiliaryWitness> witness_monotone;
    bool pass = true;
};

AuxiliaryReport verify_auxiliary_inequalities(const SdeProblem& problem, const CoefficientBounds& bounds,
                                              const AuxiliarySampler& sampler, std::size_t n);

}  // namespace theta_stationary
