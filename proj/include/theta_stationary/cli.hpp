#pragma once

#include "theta_stationary/experiments.hpp"
#include "theta_stationary/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace theta_stationary::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kRuntime = 3, kVerdictFail = 4 };

/// Malformed or inconsistent configuration; maps to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Problem selection: a built-in name, optionally with OU parameters and
/// replacement coefficient bounds.
struct ProblemConfig {
    std::string builtin = "ou";
    std::optional<double> alpha;
    std::optional<double> sigma;
    std::optional<CoefficientBounds> bounds;
};

/// Every field is optional; absent fields fall back to per-command defaults.
struct RunConfig {
    std::optional<ProblemConfig> problem;
    std::optional<double> theta;
    std::optional<double> h;
    std::optional<std::size_t> n_steps;
    std::optional<std::size_t> n_paths;
    std::optional<std::uint64_t> seed;
    std::optional<Profile> profile;
    std::optional<std::string> output_dir;
    std::optional<std::string> experiment;
    std::optional<std::vector<double>> x0;
    std::optional<std::vector<double>> y0;
    std::optional<double> snapshot_every;
    std::optional<std::vector<double>> thetas;
    std::optional<std::vector<double>> hs;
    std::optional<double> horizon;
    std::optional<std::size_t> bins;
    std::optional<std::size_t> condition_samples;
};

/// Throws ConfigError on unknown fields or wrong types.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

/// Resolves a problem selection (default: ou).
BuiltinProblem resolve_problem(const std::optional<ProblemConfig>& problem);

/// Default initial value of a built-in problem.
std::vector<double> default_x0(const std::string& builtin_name, std::size_t dim);

/// Applies config overrides to the experiment's default spec.
ExperimentSpec experiment_spec(const RunConfig& config);

int cmd_simulate(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_experiment(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_check(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Full command-line entry point; returns the process exit code.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace theta_stationary::cli
