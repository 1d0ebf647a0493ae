#pragma once

#include "theta_stationary/csv.hpp"
#include "theta_stationary/model.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace theta_stationary {

/// ci scales path counts down for desk-scale runtime; full uses the reference setups.
enum class Profile { Ci, Full };

Profile parse_profile(std::string_view text);
std::string to_string(Profile profile);

/// moment, contraction, supmoment, ou, cubic, rate, twod
const std::vector<std::string>& experiment_names();

struct ExperimentSpec {
    std::string name;
    std::string problem_name;
    BuiltinProblem problem;
    std::vector<double> thetas;
    std::vector<double> hs;
    std::size_t n_paths = 1000;
    double horizon = 10.0;
    double snapshot_every = 0.1;
    std::uint64_t seed = 1;
    Profile profile = Profile::Ci;
    std::vector<double> x0;
    std::vector<double> y0;          ///< second initial value (contraction)
    std::size_t bins = 50;           ///< histogram bins per axis
    std::size_t condition_samples = 10000;
    double reference_h = 0.0;        ///< self-reference step for the rate study (0: none)
    double path_scale = 1.0;         ///< n_paths relative to the full profile
};

/// Reference setup of an experiment under a profile. Throws LookupError for unknown names.
ExperimentSpec default_spec(const std::string& experiment, Profile profile);

/// Non-empty grids, n_paths >= 1, x0 of the problem's dimension, horizon a multiple of every h.
void validate(const ExperimentSpec& spec);

/// Least-squares line through (log h, log error).
struct RateFit {
    std::string label;
    std::vector<std::pair<double, double>> points;
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    bool exact = false;  ///< the error vanishes identically; no line is fitted
};

/// Needs at least three points with distinct positive h and positive errors.
RateFit fit_rate(std::vector<std::pair<double, double>> points, std::string label = {});

struct ExperimentReport {
    std::string experiment;
    bool pass = false;
    nlohmann::json metrics = nlohmann::json::object();
    nlohmann::json thresholds = nlohmann::json::object();
    std::vector<CsvTable> tables;
    std::vector<RateFit> fits;

    /// {experiment, pass, metrics, thresholds, ...}
    nlohmann::json verdict_json(const ExperimentSpec& spec) const;
};

/// Writes every table as <name>.csv and the verdict as verdict.json; creates dir.
void write_outputs(const ExperimentReport& report, const ExperimentSpec& spec, const std::filesystem::path& dir);

/// Second moment over time; bounded iff all finite, max <= 1e10, and the late
/// window [T/2, T] max is at most twice its median. Passes when the observation
/// matches the prediction of regime_report, so divergence of an invalid
/// scheme is a pass.
ExperimentReport run_moment_bound(const ExperimentSpec& spec);

/// Coupled paths from x0 and y0 on common noise; E|X_k - Y_k|^2 over time.
ExperimentReport run_contraction(const ExperimentSpec& spec);

/// E max_{j <= k} |X_j|^2 over time.
ExperimentReport run_sup_moment(const ExperimentSpec& spec);

/// Mean and variance against the closed forms, K-S timeline, density evolution.
/// Requires an Ornstein-Uhlenbeck problem.
ExperimentReport run_ou_study(const ExperimentSpec& spec);

/// K-S timeline and terminal moments against the quartic Gibbs law.
ExperimentReport run_cubic_study(const ExperimentSpec& spec);

/// Weak error at T over the step grid per theta; one fit per theta and error kind.
ExperimentReport run_rate_study(const ExperimentSpec& spec);

/// 2D histogram stabilization and sampled condition constants.
ExperimentReport run_2d_study(const ExperimentSpec& spec);

/// Dispatch by spec.name. Throws LookupError for unknown names.
ExperimentReport run_experiment(const ExperimentSpec& spec);

/// Finite numbers as numbers, non-finite ones as "inf", "-inf" or null.
nlohmann::json json_number(double x);

}  // namespace theta_stationary
