#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace theta_stationary {

/// Evaluates a coefficient f: R^d -> R^d into `out` (same length as `x`).
using VectorField = std::function<void(std::span<const double> x, std::span<double> out)>;

/// Row-major d x d Jacobian of a VectorField.
using JacobianField = std::function<void(std::span<const double> x, std::span<double> jac)>;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Which closed-form stationary law a built-in problem carries.
enum class StationaryKind { Normal, QuarticGibbs };

struct StationaryDescriptor {
    StationaryKind kind = StationaryKind::Normal;
    double mean = 0.0;
    double variance = 1.0;  ///< only meaningful for Normal
};

/// dx = -alpha x dt + sigma dB
struct OuParams {
    double alpha = 2.0;
    double sigma_noise = 2.0;
};

struct AnalyticInfo {
    std::optional<StationaryDescriptor> stationary;
    std::optional<OuParams> ou_params;
};

/// dx(t) = f(x(t)) dt + g(x(t)) dB(t), B a scalar Brownian motion.
///
/// Both coefficients must be total and pure on R^dim. `drift_jacobian` is
/// optional; the implicit solver falls back to central differences without it.
struct SdeProblem {
    std::string name;
    std::size_t dim = 1;
    VectorField drift;
    VectorField diffusion;
    JacobianField drift_jacobian;
    std::optional<AnalyticInfo> analytic;

    std::vector<double> eval_drift(std::span<const double> x) const;
    std::vector<double> eval_diffusion(std::span<const double> x) const;
};

/// Constants of the Lipschitz, one-sided Lipschitz, dissipativity and
/// linear-growth conditions on (f, g).
///
///   |f(x)-f(y)|^2 v |g(x)-g(y)|^2 <= k1 |x-y|^2     (f part only if drift_globally_lipschitz)
///   <x-y, f(x)-f(y)> <= k2 |x-y|^2
///   <x, f(x)> <= mu |x|^2 + a
///   |g(x)|^2 <= sigma |x|^2 + b,   |f(x)|^2 <= kappa |x|^2 + c
///
/// `k1_diffusion` optionally tightens the g-only Lipschitz constant; when
/// absent, k1 bounds g as well. kappa = infinity means f has no linear growth
/// bound (super-linear drift).
struct CoefficientBounds {
    double k1 = 0.0;
    double k2 = -1.0;
    double mu = -1.0;
    double a = 0.0;
    double sigma = 0.0;
    double b = 0.0;
    double kappa = kInfinity;
    double c = kInfinity;
    bool drift_globally_lipschitz = false;
    std::optional<double> k1_diffusion;

    double diffusion_k1() const { return k1_diffusion.value_or(k1); }
};

/// Smallest offset stored for a, b, c when the exact constant is zero.
inline constexpr double kMinOffset = 64.0 * std::numeric_limits<double>::epsilon();

/// Replaces zero offsets a, b, c by kMinOffset.
CoefficientBounds with_positive_offsets(CoefficientBounds bounds);

/// Throws ConstraintViolation naming the first violated constraint.
void validate(const CoefficientBounds& bounds);

enum class JacobianMode { AnalyticIfProvided, CentralDifference };

struct ImplicitSolverConfig {
    double rel_tol = 1e-12;
    double abs_tol = 1e-14;
    int max_iters = 50;
    JacobianMode jacobian = JacobianMode::AnalyticIfProvided;
    double fd_step = 1e-6;       ///< central-difference step is fd_step * (1 + |x_i|)
    int max_halvings = 30;
    int fallback_iters = 2000;
};

void validate(const ImplicitSolverConfig& config);

struct ThetaScheme {
    double theta = 0.5;
    double h = 0.01;
    ImplicitSolverConfig solver{};
};

/// Throws unless theta in [0,1] and h >= 0 finite.
void validate(const ThetaScheme& scheme);

struct StepThresholds {
    double moment = kInfinity;       ///< h bound for the mean-square moment estimate
    double contraction = kInfinity;  ///< h bound for mean-square contraction
};

/// Step-size ceilings for theta < 1/2; (inf, inf) for theta >= 1/2.
StepThresholds max_stable_step(double theta, const CoefficientBounds& bounds);

/// One-step second-moment factor (theta < 1/2):
/// (1 + (1-theta)^2 h^2 kappa + h sigma + 2(1-theta) h mu) / (1 - 2 mu theta h)
double moment_factor(double theta, double h, const CoefficientBounds& bounds);

/// One-step mean-square contraction factor (theta < 1/2):
/// (1 + (1-theta)^2 h^2 K1f + h K1g + 2 K2 (1-theta) h) / (1 - 2 K2 theta h)
double contraction_factor(double theta, double h, const CoefficientBounds& bounds);

enum class Regime { ThetaBelowHalf, ThetaAtLeastHalf };

/// Quantities of the theta >= 1/2 analysis for one (theta, h).
struct ImplicitRegimeConstants {
    double theta_star = 1.0;   ///< 1 + sigma/(4 mu)
    double lambda = 0.0;       ///< min((2mu+sigma)/(2mu), 2theta-1)
    double n_h = 1.0;          ///< (1 - mu(1-theta)h) / (1 - mu(1-theta+lambda)h)
    double psi = 0.0;          ///< 4(1-theta) + sigma + 2 N_h mu (2theta-1-lambda)
    double theta_star_contraction = 1.0;  ///< 1 + K1/(4 K2)
    double lambda_contraction = 0.0;      ///< min((2K2+K1)/(2K2), 2theta-1)
    double l_h = 1.0;          ///< |(1 - K2(1-theta)h) / (1 - K2(1-theta+lambda)h)|^2
    double phi = 0.0;          ///< 4(1-theta)K2 + K1 + 2(2theta-1-lambda) K2 L_h
};

ImplicitRegimeConstants implicit_regime_constants(double theta, double h,
                                                  const CoefficientBounds& bounds);

struct RegimeReport {
    Regime regime = Regime::ThetaAtLeastHalf;
    double h_max_moment = kInfinity;
    double h_max_contraction = kInfinity;
    std::optional<double> theta_star;
    std::optional<double> lambda;
    std::optional<ImplicitRegimeConstants> implicit_constants;
    bool valid = true;
    std::vector<std::string> reasons;
};

/// Diagnostics only; never throws for well-formed numbers.
RegimeReport regime_report(const ThetaScheme& scheme, const CoefficientBounds& bounds);

struct BuiltinProblem {
    SdeProblem problem;
    CoefficientBounds bounds;
};

/// "ou" (alpha = sigma = 2), "cubic1d", "cubic2d". Throws LookupError otherwise.
BuiltinProblem builtin(const std::string& name);

/// Ornstein-Uhlenbeck problem dx = -alpha x dt + sigma dB with certified bounds.
BuiltinProblem make_ou(double alpha, double sigma);

std::vector<std::string> builtin_names();

}  // namespace theta_stationary
