#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace theta_stationary {

/// A parameter constraint (sign condition, strict inequality, step threshold)
/// does not hold. The message names the violated inequality.
class ConstraintViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A coefficient returned a non-finite value at `point`.
class EvaluationError : public std::runtime_error {
public:
    EvaluationError(const std::string& what, std::vector<double> point)
        : std::runtime_error(what), point_(std::move(point)) {}

    const std::vector<double>& point() const noexcept { return point_; }

private:
    std::vector<double> point_;
};

/// The implicit solve G(x) = rhs did not reach tolerance, even after fallback.
class SolverFailure : public std::runtime_error {
public:
    SolverFailure(const std::string& what, std::vector<double> last_iterate, double residual)
        : std::runtime_error(what), last_iterate_(std::move(last_iterate)), residual_(residual) {}

    const std::vector<double>& last_iterate() const noexcept { return last_iterate_; }
    double residual() const noexcept { return residual_; }

    /// Time step at which the failure happened, when raised from a path.
    std::optional<std::size_t> step;
    /// Path index, when raised from an ensemble.
    std::optional<std::size_t> path;

private:
    std::vector<double> last_iterate_;
    double residual_;
};

class LookupError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

class EmptySampleError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace theta_stationary
