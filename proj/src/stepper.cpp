#include "theta_stationary/stepper.hpp"

#include "theta_stationary/errors.hpp"
#include "theta_stationary/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

namespace theta_stationary {

namespace {

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::vector<double> to_vector(std::span<const double> v) { return {v.begin(), v.end()}; }

SolverFailure annotate(const SolverFailure& e, const std::string& prefix, std::optional<std::size_t> step,
                       std::optional<std::size_t> path) {
    SolverFailure out(prefix + e.what(), e.last_iterate(), e.residual());
    out.step = step ? step : e.step;
    out.path = path ? path : e.path;
    return out;
}

}  // namespace

void SolverStats::merge(const SolverStats& other) {
    solves += other.solves;
    newton_iterations += other.newton_iterations;
    fallbacks += other.fallbacks;
    max_residual = std::max(max_residual, other.max_residual);
    max_residual_ratio = std::max(max_residual_ratio, other.max_residual_ratio);
}

ThetaStepper::ThetaStepper(SdeProblem problem, ThetaScheme scheme)
    : problem_(std::move(problem)), scheme_(scheme) {
    validate(scheme_);
    if (problem_.dim == 0) throw ConstraintViolation("problem dimension must be positive");
    if (!problem_.drift || !problem_.diffusion) throw ConstraintViolation("problem needs drift and diffusion");
    theta_h_ = scheme_.theta * scheme_.h;
    const std::size_t d = problem_.dim;
    for (auto* buf : {&f_, &g_, &r_, &trial_, &trial_r_, &delta_, &rhs_, &xp_, &xm_, &fp_, &fm_}) {
        buf->assign(d, 0.0);
    }
    jac_.assign(d * d, 0.0);
}

void ThetaStepper::eval_drift(std::span<const double> x, std::span<double> out) {
    problem_.drift(x, out);
    if (!all_finite(out)) throw EvaluationError("drift returned a non-finite value", to_vector(x));
}

void ThetaStepper::g_map(std::span<const double> x, std::span<double> out) {
    eval_drift(x, fp_);
    for (std::size_t i = 0; i < dim(); ++i) out[i] = x[i] - theta_h_ * fp_[i];
}

double ThetaStepper::residual(std::span<const double> x, std::span<const double> rhs, std::span<double> r) {
    problem_.drift(x, fp_);
    double s = 0.0;
    for (std::size_t i = 0; i < dim(); ++i) {
        r[i] = x[i] - theta_h_ * fp_[i] - rhs[i];
        s += r[i] * r[i];
    }
    const double n = std::sqrt(s);
    return std::isfinite(n) ? n : kInfinity;
}

void ThetaStepper::drift_jacobian(std::span<const double> x) {
    const std::size_t d = dim();
    if (problem_.drift_jacobian && scheme_.solver.jacobian == JacobianMode::AnalyticIfProvided) {
        problem_.drift_jacobian(x, jac_);
        return;
    }
    std::copy(x.begin(), x.end(), xp_.begin());
    std::copy(x.begin(), x.end(), xm_.begin());
    for (std::size_t j = 0; j < d; ++j) {
        const double step = scheme_.solver.fd_step * (1.0 + std::abs(x[j]));
        xp_[j] = x[j] + step;
        xm_[j] = x[j] - step;
        problem_.drift(xp_, fp_);
        problem_.drift(xm_, fm_);
        for (std::size_t i = 0; i < d; ++i) jac_[i * d + j] = (fp_[i] - fm_[i]) / (xp_[j] - xm_[j]);
        xp_[j] = x[j];
        xm_[j] = x[j];
    }
}

bool ThetaStepper::newton(std::span<const double> rhs, std::span<double> x, double tol, double& res_norm) {
    const std::size_t d = dim();
    const auto& cfg = scheme_.solver;
    std::copy(rhs.begin(), rhs.end(), x.begin());
    res_norm = residual(x, rhs, r_);
    for (int it = 0; it < cfg.max_iters; ++it) {
        if (res_norm <= tol) return true;
        ++stats_.newton_iterations;

        drift_jacobian(x);
        if (d == 1) {
            const double jg = 1.0 - theta_h_ * jac_[0];
            delta_[0] = -r_[0] / jg;
        } else {
            Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> jf(jac_.data(), d, d);
            Eigen::MatrixXd jg = Eigen::MatrixXd::Identity(d, d) - theta_h_ * jf;
            Eigen::Map<const Eigen::VectorXd> r(r_.data(), d);
            Eigen::Map<Eigen::VectorXd>(delta_.data(), d) = jg.partialPivLu().solve(-r);
        }
        if (!all_finite(delta_)) return false;

        bool accepted = false;
        double t = 1.0;
        for (int halving = 0; halving <= cfg.max_halvings; ++halving) {
            for (std::size_t i = 0; i < d; ++i) trial_[i] = x[i] + t * delta_[i];
            const double trial_norm = residual(trial_, rhs, trial_r_);
            if (trial_norm < res_norm) {
                std::copy(trial_.begin(), trial_.end(), x.begin());
                std::swap(r_, trial_r_);
                res_norm = trial_norm;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) return res_norm <= tol;
    }
    return res_norm <= tol;
}

bool ThetaStepper::scalar_bisection(double rhs, double& x, double tol, double& res_norm) {
    std::array<double, 1> point{};
    std::array<double, 1> r{};
    const std::array<double, 1> target{rhs};
    auto value = [&](double v) {
        point[0] = v;
        residual(point, target, r);
        return r[0];
    };

    double fx = value(x);
    if (std::isnan(fx)) return false;
    double lo = x;
    double hi = x;
    double width = std::max(1.0, std::abs(fx));
    // G is strictly increasing, so expand until the root is bracketed.
    for (int i = 0; i < 2100; ++i) {
        if (fx > 0.0) {
            lo = x - width;
            if (!(value(lo) > 0.0)) break;
        } else {
            hi = x + width;
            if (!(value(hi) < 0.0)) break;
        }
        width *= 2.0;
        if (!std::isfinite(width)) return false;
    }

    for (int i = 0; i < scheme_.solver.fallback_iters; ++i) {
        const double mid = lo + 0.5 * (hi - lo);
        const double fm = value(mid);
        if (std::isnan(fm)) return false;
        if (std::abs(fm) <= tol || mid == lo || mid == hi) {
            x = mid;
            res_norm = std::abs(fm);
            return res_norm <= tol;
        }
        (fm > 0.0 ? hi : lo) = mid;
    }
    x = lo + 0.5 * (hi - lo);
    res_norm = std::abs(value(x));
    return res_norm <= tol;
}

bool ThetaStepper::damped_fixed_point(std::span<const double> rhs, std::span<double> x, double tol,
                                      double& res_norm) {
    const std::size_t d = dim();
    res_norm = residual(x, rhs, r_);
    double omega = 1.0;
    for (int it = 0; it < scheme_.solver.fallback_iters && res_norm > tol; ++it) {
        for (std::size_t i = 0; i < d; ++i) trial_[i] = x[i] - omega * r_[i];
        const double trial_norm = residual(trial_, rhs, trial_r_);
        if (trial_norm < res_norm) {
            std::copy(trial_.begin(), trial_.end(), x.begin());
            std::swap(r_, trial_r_);
            res_norm = trial_norm;
            omega = std::min(1.0, 2.0 * omega);
        } else {
            omega *= 0.5;
            if (omega < 1e-16) break;
        }
    }
    return res_norm <= tol;
}

void ThetaStepper::solve_implicit(std::span<const double> rhs, std::span<double> x) {
    if (rhs.data() != rhs_.data()) std::copy(rhs.begin(), rhs.end(), rhs_.begin());
    if (!all_finite(rhs_)) throw EvaluationError("implicit solve with non-finite right-hand side", rhs_);
    ++stats_.solves;
    const auto& cfg = scheme_.solver;
    const double tol = cfg.abs_tol + cfg.rel_tol * norm2(rhs_);

    double res_norm = kInfinity;
    bool ok = newton(rhs_, x, tol, res_norm);
    if (!ok) {
        ++stats_.fallbacks;
        if (dim() == 1) {
            double root = x[0];
            if (!std::isfinite(root) || !std::isfinite(res_norm)) root = rhs_[0];
            ok = scalar_bisection(rhs_[0], root, tol, res_norm);
            x[0] = root;
        } else {
            if (!all_finite(x) || !std::isfinite(res_norm)) std::copy(rhs_.begin(), rhs_.end(), x.begin());
            ok = damped_fixed_point(rhs_, x, tol, res_norm);
        }
    }
    if (!ok) {
        throw SolverFailure("implicit solve did not converge (residual " + std::to_string(res_norm) +
                                ", tolerance " + std::to_string(tol) + ")",
                            to_vector(x), res_norm);
    }
    stats_.max_residual = std::max(stats_.max_residual, res_norm);
    stats_.max_residual_ratio = std::max(stats_.max_residual_ratio, res_norm / tol);
}

void ThetaStepper::step(std::span<const double> x, double db, std::span<double> out) {
    const std::size_t d = dim();
    eval_drift(x, f_);
    problem_.diffusion(x, g_);
    if (!all_finite(g_)) throw EvaluationError("diffusion returned a non-finite value", to_vector(x));
    const double explicit_weight = (1.0 - scheme_.theta) * scheme_.h;
    for (std::size_t i = 0; i < d; ++i) rhs_[i] = x[i] + explicit_weight * f_[i] + g_[i] * db;
    if (theta_h_ == 0.0) {
        if (!all_finite(rhs_)) throw EvaluationError("explicit step overflowed", to_vector(x));
        std::copy(rhs_.begin(), rhs_.end(), out.begin());
        return;
    }
    solve_implicit(rhs_, out);
}

std::vector<double> g_map(const SdeProblem& problem, const ThetaScheme& scheme, std::span<const double> x) {
    ThetaStepper stepper(problem, scheme);
    std::vector<double> out(problem.dim);
    stepper.g_map(x, out);
    return out;
}

std::vector<double> solve_implicit(const SdeProblem& problem, const ThetaScheme& scheme,
                                   std::span<const double> rhs) {
    ThetaStepper stepper(problem, scheme);
    std::vector<double> out(problem.dim);
    stepper.solve_implicit(rhs, out);
    return out;
}

std::vector<double> step(const SdeProblem& problem, const ThetaScheme& scheme, std::span<const double> x,
                         double db) {
    ThetaStepper stepper(problem, scheme);
    std::vector<double> out(problem.dim);
    stepper.step(x, db, out);
    return out;
}

namespace {

void check_initial(const SdeProblem& problem, std::span<const double> x0) {
    if (x0.size() != problem.dim) {
        throw ConstraintViolation("initial state has dimension " + std::to_string(x0.size()) + ", problem has " +
                                  std::to_string(problem.dim));
    }
}

}  // namespace

PathResult simulate_path(const SdeProblem& problem, const ThetaScheme& scheme, std::span<const double> x0,
                         std::size_t n_steps, noise::IncrementStream& stream) {
    check_initial(problem, x0);
    ThetaStepper stepper(problem, scheme);
    PathResult result;
    result.dim = problem.dim;
    result.h = scheme.h;
    result.states.reserve((n_steps + 1) * problem.dim);
    std::size_t current = 0;
    try {
        drive_path(stepper, x0, n_steps, stream, [&](std::size_t k, std::span<const double> x) {
            current = k;
            result.states.insert(result.states.end(), x.begin(), x.end());
            return true;
        });
    } catch (const SolverFailure& e) {
        throw annotate(e, "step " + std::to_string(current) + ": ", current, std::nullopt);
    } catch (const EvaluationError& e) {
        throw EvaluationError("step " + std::to_string(current) + ": " + e.what(), e.point());
    }
    result.solver_stats = stepper.stats();
    return result;
}

std::pair<PathResult, PathResult> simulate_coupled(const SdeProblem& problem, const ThetaScheme& scheme,
                                                   std::span<const double> x0, std::span<const double> y0,
                                                   std::size_t n_steps,
                                                   std::pair<noise::IncrementStream, noise::IncrementStream>& streams) {
    check_initial(problem, x0);
    check_initial(problem, y0);
    ThetaStepper stepper(problem, scheme);
    const std::size_t d = problem.dim;
    std::pair<PathResult, PathResult> out;
    for (auto* p : {&out.first, &out.second}) {
        p->dim = d;
        p->h = scheme.h;
        p->states.reserve((n_steps + 1) * d);
    }
    std::vector<double> x(x0.begin(), x0.end());
    std::vector<double> y(y0.begin(), y0.end());
    out.first.states.insert(out.first.states.end(), x.begin(), x.end());
    out.second.states.insert(out.second.states.end(), y.begin(), y.end());
    for (std::size_t k = 0; k < n_steps; ++k) {
        try {
            stepper.step(x, streams.first.next(), x);
            stepper.step(y, streams.second.next(), y);
        } catch (const SolverFailure& e) {
            throw annotate(e, "step " + std::to_string(k) + ": ", k, std::nullopt);
        }
        out.first.states.insert(out.first.states.end(), x.begin(), x.end());
        out.second.states.insert(out.second.states.end(), y.begin(), y.end());
    }
    out.first.solver_stats = stepper.stats();
    out.second.solver_stats = stepper.stats();
    return out;
}

std::vector<double> EnsembleResult::component(std::size_t s, std::size_t j) const {
    std::vector<double> out(n_paths);
    const auto& snap = snapshots.at(s);
    for (std::size_t p = 0; p < n_paths; ++p) out[p] = snap[p * dim + j];
    return out;
}

std::vector<std::size_t> snapshot_steps(std::span<const double> times, double h, std::size_t n_steps) {
    std::vector<std::size_t> steps;
    steps.reserve(times.size());
    for (double t : times) {
        if (!(t >= 0.0)) throw ConstraintViolation("snapshot times must be >= 0");
        if (h == 0.0) {
            if (t != 0.0) throw ConstraintViolation("with h = 0 only t = 0 is on the grid");
            steps.push_back(0);
            continue;
        }
        const double k = std::round(t / h);
        if (std::abs(k * h - t) > 1e-9 * std::max(1.0, t)) {
            throw ConstraintViolation("snapshot time " + std::to_string(t) + " is not a multiple of h");
        }
        if (k > static_cast<double>(n_steps)) {
            throw ConstraintViolation("snapshot time " + std::to_string(t) + " lies beyond the horizon");
        }
        steps.push_back(static_cast<std::size_t>(k));
    }
    return steps;
}

EnsembleResult simulate_ensemble(const SdeProblem& problem, const ThetaScheme& scheme,
                                 std::span<const double> x0, std::size_t n_steps, std::size_t n_paths,
                                 std::uint64_t base_seed, std::span<const double> snapshot_times,
                                 const EnsembleOptions& options) {
    check_initial(problem, x0);
    validate(scheme);
    const std::size_t d = problem.dim;

    EnsembleResult result;
    result.dim = d;
    result.n_paths = n_paths;
    result.times.assign(snapshot_times.begin(), snapshot_times.end());
    result.steps = snapshot_steps(snapshot_times, scheme.h, n_steps);
    result.snapshots.assign(result.steps.size(), std::vector<double>(n_paths * d));
    result.base_seed = base_seed;
    result.scheme = scheme;

    const noise::EnsembleSeeding seeding{base_seed};
    result.seeds.resize(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) result.seeds[p] = seeding.path_seed(p);

    // Snapshot indices ordered by step so one forward pass fills them all.
    std::vector<std::size_t> order(result.steps.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return result.steps[a] < result.steps[b]; });
    const std::size_t last_step = result.steps.empty() ? 0 : result.steps[order.back()];

    const std::size_t workers = std::min(worker_count(), std::max<std::size_t>(n_paths, 1));
    std::vector<SolverStats> stats(workers);
    std::vector<std::size_t> diverged(workers, 0);

    parallel_chunks(n_paths, [&](std::size_t worker, std::size_t begin, std::size_t end) {
        ThetaStepper stepper(problem, scheme);
        for (std::size_t p = begin; p < end; ++p) {
            auto stream = seeding.stream(p, scheme.h);
            std::size_t next = 0;
            std::size_t current = 0;
            auto record = [&](std::size_t k, std::span<const double> x) {
                while (next < order.size() && result.steps[order[next]] == k) {
                    std::copy(x.begin(), x.end(), result.snapshots[order[next]].begin() + p * d);
                    ++next;
                }
            };
            auto mark_diverged = [&]() {
                ++diverged[worker];
                for (; next < order.size(); ++next) {
                    std::fill_n(result.snapshots[order[next]].begin() + p * d, d, kInfinity);
                }
            };
            try {
                drive_path(stepper, x0, last_step, stream, [&](std::size_t k, std::span<const double> x) {
                    current = k;
                    if (options.divergence_cap) {
                        double sq = 0.0;
                        for (double v : x) sq += v * v;
                        if (!std::isfinite(sq) || sq > *options.divergence_cap) {
                            mark_diverged();
                            return false;
                        }
                    }
                    record(k, x);
                    return next < order.size();
                });
            } catch (const SolverFailure& e) {
                if (options.divergence_cap) {
                    mark_diverged();
                    continue;
                }
                throw annotate(e, "path " + std::to_string(p) + ", step " + std::to_string(current) + ": ",
                               current, p);
            } catch (const EvaluationError& e) {
                if (options.divergence_cap) {
                    mark_diverged();
                    continue;
                }
                throw EvaluationError("path " + std::to_string(p) + ", step " + std::to_string(current) + ": " +
                                          e.what(),
                                      e.point());
            }
        }
        stats[worker] = stepper.stats();
    });

    for (std::size_t w = 0; w < workers; ++w) {
        result.solver_stats.merge(stats[w]);
        result.diverged_paths += diverged[w];
    }
    return result;
}

}  // namespace theta_stationary
