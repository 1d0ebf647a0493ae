#pragma once

#include "theta_stationary/model.hpp"
#include "theta_stationary/noise.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace theta_stationary {

struct SolverStats {
    std::uint64_t solves = 0;
    std::uint64_t newton_iterations = 0;
    std::uint64_t fallbacks = 0;
    double max_residual = 0.0;
    /// max over solves of residual / (abs_tol + rel_tol * |rhs|); <= 1 on success
    double max_residual_ratio = 0.0;

    void merge(const SolverStats& other);
};

/// The stochastic theta step
///
///   X_{k+1} = X_k + theta h f(X_{k+1}) + (1 - theta) h f(X_k) + g(X_k) dB_k,
///
/// evaluated as X_{k+1} = G^{-1}(X_k + (1 - theta) h f(X_k) + g(X_k) dB_k) with
/// G(x) = x - theta h f(x). Holds its own scratch buffers, so one instance
/// must not be shared between threads.
class ThetaStepper {
public:
    ThetaStepper(SdeProblem problem, ThetaScheme scheme);

    std::size_t dim() const noexcept { return problem_.dim; }
    const SdeProblem& problem() const noexcept { return problem_; }
    const ThetaScheme& scheme() const noexcept { return scheme_; }
    const SolverStats& stats() const noexcept { return stats_; }
    void reset_stats() noexcept { stats_ = {}; }

    /// out = x - theta h f(x)
    void g_map(std::span<const double> x, std::span<double> out);

    /// Solves G(x) = rhs; x receives the root.
    void solve_implicit(std::span<const double> rhs, std::span<double> x);

    /// One step from x with Brownian increment db. `out` may alias `x`.
    void step(std::span<const double> x, double db, std::span<double> out);

private:
    void eval_drift(std::span<const double> x, std::span<double> out);
    double residual(std::span<const double> x, std::span<const double> rhs, std::span<double> r);
    void drift_jacobian(std::span<const double> x);
    bool newton(std::span<const double> rhs, std::span<double> x, double tol, double& res_norm);
    bool scalar_bisection(double rhs, double& x, double tol, double& res_norm);
    bool damped_fixed_point(std::span<const double> rhs, std::span<double> x, double tol, double& res_norm);

    SdeProblem problem_;
    ThetaScheme scheme_;
    double theta_h_;
    SolverStats stats_;
    std::vector<double> f_, g_, r_, trial_, trial_r_, jac_, delta_, rhs_, xp_, xm_, fp_, fm_;
};

/// x - theta h f(x)
std::vector<double> g_map(const SdeProblem& problem, const ThetaScheme& scheme, std::span<const double> x);

/// G^{-1}(rhs)
std::vector<double> solve_implicit(const SdeProblem& problem, const ThetaScheme& scheme,
                                   std::span<const double> rhs);

std::vector<double> step(const SdeProblem& problem, const ThetaScheme& scheme, std::span<const double> x,
                         double db);

struct PathResult {
    std::size_t dim = 1;
    double h = 0.0;
    std::vector<double> states;  ///< (n_steps + 1) * dim, row k is X_k
    SolverStats solver_stats;

    std::size_t size() const noexcept { return dim == 0 ? 0 : states.size() / dim; }
    std::span<const double> state(std::size_t k) const { return {states.data() + k * dim, dim}; }
    double time(std::size_t k) const noexcept { return static_cast<double>(k) * h; }
};

PathResult simulate_path(const SdeProblem& problem, const ThetaScheme& scheme, std::span<const double> x0,
                         std::size_t n_steps, noise::IncrementStream& stream);

std::pair<PathResult, PathResult> simulate_coupled(const SdeProblem& problem, const ThetaScheme& scheme,
                                                   std::span<const double> x0, std::span<const double> y0,
                                                   std::size_t n_steps,
                                                   std::pair<noise::IncrementStream, noise::IncrementStream>& streams);

/// Calls visit(k, state) for k = 0..n_steps; stops early when visit returns false.
template <class Visitor>
void drive_path(ThetaStepper& stepper, std::span<const double> x0, std::size_t n_steps,
                noise::IncrementStream& stream, Visitor&& visit) {
    std::vector<double> x(x0.begin(), x0.end());
    if (!visit(std::size_t{0}, std::span<const double>(x))) return;
    for (std::size_t k = 0; k < n_steps; ++k) {
        stepper.step(x, stream.next(), x);
        if (!visit(k + 1, std::span<const double>(x))) return;
    }
}

struct EnsembleOptions {
    /// When set, a path with |X_k|^2 > cap (or a non-finite state) is marked
    /// diverged and reports +inf from then on, instead of raising.
    std::optional<double> divergence_cap;
};

struct EnsembleResult {
    std::size_t dim = 1;
    std::size_t n_paths = 0;
    std::vector<double> times;
    std::vector<std::size_t> steps;
    /// snapshots[s] holds n_paths * dim values, path-major
    std::vector<std::vector<double>> snapshots;
    std::vector<std::uint64_t> seeds;
    std::uint64_t base_seed = 0;
    ThetaScheme scheme;
    SolverStats solver_stats;
    std::size_t diverged_paths = 0;

    /// Coordinate j of every path at snapshot s.
    std::vector<double> component(std::size_t s, std::size_t j = 0) const;
};

/// Maps snapshot times onto the step grid {0, h, ..., n_steps h}; throws if a
/// time is off-grid (relative tolerance 1e-9) or beyond the horizon.
std::vector<std::size_t> snapshot_steps(std::span<const double> times, double h, std::size_t n_steps);

EnsembleResult simulate_ensemble(const SdeProblem& problem, const ThetaScheme& scheme,
                                 std::span<const double> x0, std::size_t n_steps, std::size_t n_paths,
                                 std::uint64_t base_seed, std::span<const double> snapshot_times,
                                 const EnsembleOptions& options = {});

}  // namespace theta_stationary
