#include "theta_stationary/cli.hpp"

#include "theta_stationary/conditions.hpp"
#include "theta_stationary/csv.hpp"
#include "theta_stationary/empirical.hpp"
#include "theta_stationary/errors.hpp"
#include "theta_stationary/noise.hpp"
#include "theta_stationary/stepper.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <ostream>

namespace theta_stationary::cli {

using nlohmann::json;

namespace {

double get_double(const json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError("field '" + key + "' must be a number");
    return v.get<double>();
}

std::uint64_t get_u64(const json& v, const std::string& key) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw ConfigError("field '" + key + "' must be a non-negative integer");
}

std::size_t get_count(const json& v, const std::string& key) { return static_cast<std::size_t>(get_u64(v, key)); }

std::string get_string(const json& v, const std::string& key) {
    if (!v.is_string()) throw ConfigError("field '" + key + "' must be a string");
    return v.get<std::string>();
}

std::vector<double> get_vector(const json& v, const std::string& key) {
    if (v.is_number()) return {v.get<double>()};
    if (!v.is_array() || v.empty()) throw ConfigError("field '" + key + "' must be a number or a non-empty array");
    std::vector<double> out;
    for (const auto& e : v) out.push_back(get_double(e, key));
    return out;
}

CoefficientBounds parse_bounds(const json& v) {
    if (!v.is_object()) throw ConfigError("field 'bounds' must be an object");
    CoefficientBounds b;
    for (const auto& [key, value] : v.items()) {
        if (key == "k1") b.k1 = get_double(value, key);
        else if (key == "k1_diffusion") b.k1_diffusion = get_double(value, key);
        else if (key == "k2") b.k2 = get_double(value, key);
        else if (key == "mu") b.mu = get_double(value, key);
        else if (key == "a") b.a = get_double(value, key);
        else if (key == "sigma") b.sigma = get_double(value, key);
        else if (key == "b") b.b = get_double(value, key);
        else if (key == "kappa") b.kappa = value.is_null() ? kInfinity : get_double(value, key);
        else if (key == "c") b.c = value.is_null() ? kInfinity : get_double(value, key);
        else if (key == "drift_globally_lipschitz") {
            if (!value.is_boolean()) throw ConfigError("field 'drift_globally_lipschitz' must be a boolean");
            b.drift_globally_lipschitz = value.get<bool>();
        } else {
            throw ConfigError("unknown bounds field '" + key + "'");
        }
    }
    return b;
}

ProblemConfig parse_problem(const json& v) {
    ProblemConfig p;
    if (v.is_string()) {
        p.builtin = v.get<std::string>();
        return p;
    }
    if (!v.is_object()) throw ConfigError("field 'problem' must be a name or an object");
    bool named = false;
    for (const auto& [key, value] : v.items()) {
        if (key == "builtin") {
            p.builtin = get_string(value, key);
            named = true;
        } else if (key == "alpha") {
            p.alpha = get_double(value, key);
        } else if (key == "sigma") {
            p.sigma = get_double(value, key);
        } else if (key == "bounds") {
            p.bounds = parse_bounds(value);
        } else {
            throw ConfigError("unknown problem field '" + key + "'");
        }
    }
    if (!named) throw ConfigError("inline problem needs a 'builtin' field");
    return p;
}

json regime_json(const RegimeReport& r) {
    json j = {{"regime", r.regime == Regime::ThetaBelowHalf ? "theta_below_half" : "theta_at_least_half"},
              {"valid", r.valid},
              {"h_max_moment", json_number(r.h_max_moment)},
              {"h_max_contraction", json_number(r.h_max_contraction)},
              {"reasons", r.reasons}};
    if (r.theta_star) j["theta_star"] = json_number(*r.theta_star);
    if (r.lambda) j["lambda"] = json_number(*r.lambda);
    if (r.implicit_constants) {
        const auto& c = *r.implicit_constants;
        j["implicit_constants"] = {{"theta_star", json_number(c.theta_star)},
                                   {"lambda", json_number(c.lambda)},
                                   {"n_h", json_number(c.n_h)},
                                   {"psi", json_number(c.psi)},
                                   {"theta_star_contraction", json_number(c.theta_star_contraction)},
                                   {"lambda_contraction", json_number(c.lambda_contraction)},
                                   {"l_h", json_number(c.l_h)},
                                   {"phi", json_number(c.phi)}};
    }
    return j;
}

json conditions_json(const ConditionReport& r) {
    json checks = json::array();
    for (const auto& c : r.checks) {
        json e = {{"name", c.name}, {"checked", c.checked}, {"bound", json_number(c.bound)}};
        if (c.checked) {
            e["worst_ratio"] = json_number(c.worst_ratio);
            e["min_ratio"] = json_number(c.min_ratio);
            e["violations"] = c.violations;
            if (c.violations > 0) e["witness"] = {{"x", c.witness_x}, {"y", c.witness_y}};
        }
        checks.push_back(e);
    }
    return {{"samples", r.samples}, {"pass", r.pass}, {"checks", checks}};
}

std::filesystem::path output_dir(const RunConfig& config, const std::string& fallback) {
    return config.output_dir ? std::filesystem::path(*config.output_dir) : std::filesystem::path(fallback);
}

std::vector<std::string> state_columns(std::size_t dim) {
    if (dim == 1) return {"x"};
    std::vector<std::string> c;
    for (std::size_t j = 0; j < dim; ++j) c.push_back("x" + std::to_string(j + 1));
    return c;
}

std::string problem_label(const RunConfig& config) { return config.problem ? config.problem->builtin : "ou"; }

json solver_json(const SolverStats& s) {
    return {{"solves", s.solves},
            {"newton_iterations", s.newton_iterations},
            {"fallbacks", s.fallbacks},
            {"max_residual", json_number(s.max_residual)}};
}

/// Runs a command body, mapping exception types to exit codes.
template <class Body>
int guarded(std::ostream& err, Body&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const ConstraintViolation& e) {
        err << "invalid configuration: " << e.what() << '\n';
        return kUsage;
    } catch (const LookupError& e) {
        err << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const SolverFailure& e) {
        err << "solver failure: " << e.what();
        if (e.step) err << " (step " << *e.step << ")";
        if (e.path) err << " (path " << *e.path << ")";
        err << '\n';
        return kRuntime;
    } catch (const std::exception& e) {
        err << "runtime error: " << e.what() << '\n';
        return kRuntime;
    }
}

}  // namespace

RunConfig parse_config(const json& doc) {
    if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
    RunConfig c;
    for (const auto& [key, v] : doc.items()) {
        if (key == "problem") c.problem = parse_problem(v);
        else if (key == "theta") c.theta = get_double(v, key);
        else if (key == "h") c.h = get_double(v, key);
        else if (key == "n_steps") c.n_steps = get_count(v, key);
        else if (key == "n_paths") c.n_paths = get_count(v, key);
        else if (key == "seed") c.seed = get_u64(v, key);
        else if (key == "profile") {
            try {
                c.profile = parse_profile(get_string(v, key));
            } catch (const ConstraintViolation& e) {
                throw ConfigError(e.what());
            }
        } else if (key == "output_dir") c.output_dir = get_string(v, key);
        else if (key == "experiment") c.experiment = get_string(v, key);
        else if (key == "x0") c.x0 = get_vector(v, key);
        else if (key == "y0") c.y0 = get_vector(v, key);
        else if (key == "snapshot_every") c.snapshot_every = get_double(v, key);
        else if (key == "thetas") c.thetas = get_vector(v, key);
        else if (key == "hs") c.hs = get_vector(v, key);
        else if (key == "horizon") c.horizon = get_double(v, key);
        else if (key == "bins") c.bins = get_count(v, key);
        else if (key == "condition_samples") c.condition_samples = get_count(v, key);
        else throw ConfigError("unknown field '" + key + "'");
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_config(doc);
}

BuiltinProblem resolve_problem(const std::optional<ProblemConfig>& problem) {
    const ProblemConfig p = problem.value_or(ProblemConfig{});
    BuiltinProblem out;
    if (p.alpha || p.sigma) {
        if (p.builtin != "ou") throw ConfigError("alpha and sigma only apply to the ou problem");
        out = make_ou(p.alpha.value_or(2.0), p.sigma.value_or(2.0));
    } else {
        try {
            out = builtin(p.builtin);
        } catch (const LookupError& e) {
            throw ConfigError(e.what());
        }
    }
    if (p.bounds) {
        validate(*p.bounds);
        out.bounds = *p.bounds;
    }
    return out;
}

std::vector<double> default_x0(const std::string& builtin_name, std::size_t dim) {
    if (builtin_name == "cubic2d") return {2.0, 3.0};
    return std::vector<double>(dim, 2.0);
}

ExperimentSpec experiment_spec(const RunConfig& config) {
    if (!config.experiment) throw ConfigError("no experiment named; set 'experiment' or pass --experiment");
    const Profile profile = config.profile.value_or(Profile::Ci);
    ExperimentSpec spec;
    try {
        spec = default_spec(*config.experiment, profile);
    } catch (const LookupError& e) {
        throw ConfigError(e.what());
    }
    const std::size_t default_paths = spec.n_paths;
    if (config.problem) {
        spec.problem = resolve_problem(config.problem);
        spec.problem_name = config.problem->builtin;
        if (spec.x0.size() != spec.problem.problem.dim) {
            spec.x0 = default_x0(spec.problem_name, spec.problem.problem.dim);
            if (!spec.y0.empty()) {
                spec.y0 = spec.x0;
                for (double& v : spec.y0) v = -v;
            }
        }
    }
    if (config.thetas) spec.thetas = *config.thetas;
    if (config.theta) spec.thetas = {*config.theta};
    if (config.hs) spec.hs = *config.hs;
    if (config.h) spec.hs = {*config.h};
    if (config.horizon) spec.horizon = *config.horizon;
    if (config.n_steps) spec.horizon = static_cast<double>(*config.n_steps) * spec.hs.front();
    if (config.n_paths) {
        spec.path_scale *= static_cast<double>(*config.n_paths) / static_cast<double>(default_paths);
        spec.n_paths = *config.n_paths;
    }
    if (config.seed) spec.seed = *config.seed;
    if (config.x0) spec.x0 = *config.x0;
    if (config.y0) spec.y0 = *config.y0;
    if (config.snapshot_every) spec.snapshot_every = *config.snapshot_every;
    if (config.bins) spec.bins = *config.bins;
    if (config.condition_samples) spec.condition_samples = *config.condition_samples;
    validate(spec);
    return spec;
}

int cmd_simulate(const RunConfig& config, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() {
        const BuiltinProblem bp = resolve_problem(config.problem);
        const auto& problem = bp.problem;
        ThetaScheme scheme;
        scheme.theta = config.theta.value_or(0.5);
        scheme.h = config.h.value_or(0.01);
        validate(scheme);
        const std::size_t n_steps = config.n_steps.value_or(100);
        const std::size_t n_paths = config.n_paths.value_or(1);
        const std::uint64_t seed = config.seed.value_or(1);
        const auto x0 = config.x0.value_or(default_x0(problem_label(config), problem.dim));
        if (x0.size() != problem.dim) throw ConfigError("x0 must have one entry per dimension");
        if (n_paths == 0) throw ConfigError("n_paths must be >= 1");

        const auto dir = output_dir(config, "out");
        std::filesystem::create_directories(dir);
        CsvTable table;
        table.meta = {{"experiment", "simulate"},
                      {"seed", std::to_string(seed)},
                      {"scheme", "theta=" + format_number(scheme.theta) + " h=" + format_number(scheme.h)},
                      {"problem", problem_label(config)},
                      {"profile", to_string(config.profile.value_or(Profile::Ci))}};
        json summary;
        if (n_paths == 1) {
            auto stream = noise::EnsembleSeeding{seed}.stream(0, scheme.h);
            const auto path = simulate_path(problem, scheme, x0, n_steps, stream);
            table.name = "path";
            table.columns = {"t"};
            for (const auto& c : state_columns(problem.dim)) table.columns.push_back(c);
            for (std::size_t k = 0; k < path.size(); ++k) {
                std::vector<double> row = {path.time(k)};
                const auto s = path.state(k);
                row.insert(row.end(), s.begin(), s.end());
                table.add_row(std::move(row));
            }
            const auto last = path.state(path.size() - 1);
            summary = {{"paths", 1},
                       {"steps", n_steps},
                       {"terminal_state", std::vector<double>(last.begin(), last.end())},
                       {"solver", solver_json(path.solver_stats)}};
        } else {
            const double every = config.snapshot_every.value_or(static_cast<double>(n_steps) * scheme.h);
            std::vector<double> times;
            const auto count = static_cast<std::size_t>(std::floor(static_cast<double>(n_steps) * scheme.h / every + 1e-9));
            for (std::size_t i = 0; i <= count; ++i) times.push_back(static_cast<double>(i) * every);
            const auto ens = simulate_ensemble(problem, scheme, x0, n_steps, n_paths, seed, times);
            table.name = "ensemble";
            table.columns = {"t", "path"};
            for (const auto& c : state_columns(problem.dim)) table.columns.push_back(c);
            for (std::size_t s = 0; s < times.size(); ++s) {
                for (std::size_t p = 0; p < n_paths; ++p) {
                    std::vector<double> row = {times[s], static_cast<double>(p)};
                    for (std::size_t j = 0; j < problem.dim; ++j) row.push_back(ens.snapshots[s][p * problem.dim + j]);
                    table.add_row(std::move(row));
                }
            }
            const auto& last = ens.snapshots.back();
            const auto m = moments(PointCloud{problem.dim, last});
            summary = {{"paths", n_paths},
                       {"steps", n_steps},
                       {"terminal_mean", m.mean},
                       {"terminal_variance", m.variance},
                       {"terminal_second_moment", m.second_moment},
                       {"solver", solver_json(ens.solver_stats)}};
        }
        const auto file = dir / (table.name + ".csv");
        write_csv(file, table);
        summary["output"] = file.string();
        out << summary.dump(2) << '\n';
        return int{kOk};
    });
}

int cmd_experiment(const RunConfig& config, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() {
        const ExperimentSpec spec = experiment_spec(config);
        const ExperimentReport report = run_experiment(spec);
        const auto dir = output_dir(config, "out/" + spec.name);
        write_outputs(report, spec, dir);
        json verdict = report.verdict_json(spec);
        verdict["output_dir"] = dir.string();
        out << verdict.dump(2) << '\n';
        return int{report.pass ? kOk : kVerdictFail};
    });
}

int cmd_check(const RunConfig& config, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() {
        const BuiltinProblem bp = resolve_problem(config.problem);
        ThetaScheme scheme;
        scheme.theta = config.theta.value_or(0.5);
        scheme.h = config.h.value_or(0.01);
        const RegimeReport regime = regime_report(scheme, bp.bounds);
        const auto conditions = check_conditions_sampled(bp.problem, bp.bounds, BoxSampler{-10.0, 10.0, config.seed.value_or(1)},
                                                         config.condition_samples.value_or(10000));
        const bool valid = regime.valid && conditions.pass;
        const json report = {{"problem", problem_label(config)},
                             {"theta", scheme.theta},
                             {"h", scheme.h},
                             {"valid", valid},
                             {"regime", regime_json(regime)},
                             {"conditions", conditions_json(conditions)}};
        out << report.dump(2) << '\n';
        return int{valid ? kOk : kVerdictFail};
    });
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Stochastic theta method: simulation, stationary-law experiments and condition checks",
                 "theta-stationary"};
    app.require_subcommand(1);

    struct Flags {
        std::string config_positional;
        std::string config_flag;
        std::optional<std::uint64_t> seed;
        std::optional<std::string> profile;
        std::optional<std::string> out_dir;
        std::optional<std::string> experiment;
    } flags;

    const auto add_common = [&flags](CLI::App* sub) {
        sub->add_option("path", flags.config_positional, "JSON configuration file");
        sub->add_option("--config", flags.config_flag, "JSON configuration file");
        sub->add_option("--seed", flags.seed, "Seed (overrides the configuration)");
        sub->add_option("--profile", flags.profile, "Run profile")->check(CLI::IsMember({"ci", "full"}));
        sub->add_option("--out", flags.out_dir, "Output directory");
    };
    CLI::App* simulate = app.add_subcommand("simulate", "Simulate one path or an ensemble and write CSV");
    CLI::App* experiment = app.add_subcommand("experiment", "Run a named experiment and write CSVs plus verdict.json");
    CLI::App* check = app.add_subcommand("check", "Report the step-size regime and sampled coefficient conditions");
    add_common(simulate);
    add_common(experiment);
    add_common(check);
    experiment->add_option("--experiment,-e", flags.experiment, "Experiment name");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n' << app.help();
        return kUsage;
    }

    RunConfig config;
    try {
        if (!flags.config_positional.empty() && !flags.config_flag.empty()) {
            throw ConfigError("give the configuration either positionally or with --config, not both");
        }
        const std::string path = flags.config_flag.empty() ? flags.config_positional : flags.config_flag;
        if (!path.empty()) config = load_config(path);
        if (flags.seed) config.seed = *flags.seed;
        if (flags.profile) config.profile = parse_profile(*flags.profile);
        if (flags.out_dir) config.output_dir = *flags.out_dir;
        if (flags.experiment) config.experiment = *flags.experiment;
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << '\n';
        return kUsage;
    }

    if (simulate->parsed()) return cmd_simulate(config, out, err);
    if (experiment->parsed()) return cmd_experiment(config, out, err);
    return cmd_check(config, out, err);
}

}  // namespace theta_stationary::cli
