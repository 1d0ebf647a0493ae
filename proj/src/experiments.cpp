#include "theta_stationary/experiments.hpp"

#include "theta_stationary/conditions.hpp"
#include "theta_stationary/empirical.hpp"
#include "theta_stationary/errors.hpp"
#include "theta_stationary/noise.hpp"
#include "theta_stationary/parallel.hpp"
#include "theta_stationary/reference.hpp"
#include "theta_stationary/stepper.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace theta_stationary {

using nlohmann::json;

namespace {

constexpr double kDivergenceCap = 1e100;
constexpr double kBlowUp = 1e10;
constexpr double kBandSe = 4.0;
constexpr double kPValue = 0.05;

std::size_t steps_for(double horizon, double h) { return static_cast<std::size_t>(std::llround(horizon / h)); }

std::vector<double> time_grid(double horizon, double every) {
    const std::size_t n = steps_for(horizon, every);
    std::vector<double> t(n + 1);
    for (std::size_t i = 0; i <= n; ++i) t[i] = static_cast<double>(i) * every;
    return t;
}

std::string join(const std::vector<double>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "|" : "") + format_number(xs[i]);
    return s;
}

CsvTable make_table(const ExperimentSpec& spec, std::string name, std::vector<std::string> columns,
                    const std::vector<double>& thetas, const std::vector<double>& hs) {
    CsvTable t;
    t.name = std::move(name);
    t.meta = {{"experiment", spec.name},
              {"seed", std::to_string(spec.seed)},
              {"scheme", "theta=" + join(thetas) + " h=" + join(hs)},
              {"problem", spec.problem_name},
              {"profile", to_string(spec.profile)}};
    t.columns = std::move(columns);
    return t;
}

CsvTable make_table(const ExperimentSpec& spec, std::string name, std::vector<std::string> columns) {
    return make_table(spec, std::move(name), std::move(columns), {spec.thetas.front()}, {spec.hs.front()});
}

ThetaScheme first_scheme(const ExperimentSpec& spec) {
    ThetaScheme s;
    s.theta = spec.thetas.front();
    s.h = spec.hs.front();
    return s;
}

struct Estimate {
    double mean = 0.0;
    double se = 0.0;
};

Estimate estimate(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double sum = 0.0;
    for (double x : v) {
        if (!std::isfinite(x)) return {kInfinity, kInfinity};
        sum += x;
    }
    const double mean = sum / n;
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

std::vector<double> squared_norms(const EnsembleResult& ens, std::size_t s) {
    std::vector<double> out(ens.n_paths);
    const auto& snap = ens.snapshots[s];
    for (std::size_t p = 0; p < ens.n_paths; ++p) {
        double sq = 0.0;
        for (std::size_t j = 0; j < ens.dim; ++j) sq += snap[p * ens.dim + j] * snap[p * ens.dim + j];
        out[p] = sq;
    }
    return out;
}

/// Least-squares slope and intercept of y on x.
std::pair<double, double> line_fit(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

struct KsTimeline {
    CsvTable table;
    std::vector<double> times;
    std::vector<double> p_values;
};

KsTimeline ks_timeline(const ExperimentSpec& spec, const EnsembleResult& ens, const ReferenceDistribution& ref) {
    KsTimeline out{make_table(spec, "ks_timeline", {"t", "D", "p"}), ens.times, {}};
    for (std::size_t s = 0; s < ens.times.size(); ++s) {
        const auto ks = ks_test(EmpiricalDistribution(ens.component(s)), ref);
        out.table.add_row({ens.times[s], ks.statistic, ks.p_value});
        out.p_values.push_back(ks.p_value);
    }
    return out;
}

double window_median(const KsTimeline& k, double from, double to) {
    std::vector<double> window;
    for (std::size_t i = 0; i < k.times.size(); ++i) {
        if (k.times[i] >= from - 1e-12 && k.times[i] <= to + 1e-12) window.push_back(k.p_values[i]);
    }
    return median(std::move(window));
}

CsvTable density_evolution(const ExperimentSpec& spec, const EnsembleResult& ens) {
    double lo = kInfinity;
    double hi = -kInfinity;
    for (const auto& snap : ens.snapshots) {
        const auto [mn, mx] = std::minmax_element(snap.begin(), snap.end());
        lo = std::min(lo, *mn);
        hi = std::max(hi, *mx);
    }
    if (lo == hi) {
        lo -= 0.5;
        hi += 0.5;
    }
    CsvTable table = make_table(spec, "density", {"t", "x", "mass"});
    for (std::size_t s = 0; s < ens.times.size(); ++s) {
        const auto d = histogram_density(EmpiricalDistribution(ens.component(s)), spec.bins, Range{lo, hi});
        for (std::size_t i = 0; i < d.bins; ++i) table.add_row({ens.times[s], d.center(0, i), d.mass(i)});
    }
    return table;
}

const OuParams& require_ou(const ExperimentSpec& spec) {
    const auto& a = spec.problem.problem.analytic;
    if (!a || !a->ou_params) {
        throw ConstraintViolation("experiment '" + spec.name + "' needs an Ornstein-Uhlenbeck problem");
    }
    return *a->ou_params;
}

/// Per-step mean factor and stationary variance of the theta scheme on OU.
struct OuClosedForm {
    double r = 0.0;
    double stationary_variance = 0.0;
};

OuClosedForm ou_closed_form(const OuParams& ou, double theta, double h) {
    const double a = ou.alpha;
    const double s2 = ou.sigma_noise * ou.sigma_noise;
    OuClosedForm c;
    c.r = (1.0 - (1.0 - theta) * a * h) / (1.0 + theta * a * h);
    const double denom = 2.0 * a - a * a * h + 2.0 * a * a * theta * h;
    if (!(std::abs(c.r) < 1.0) || !(denom > 0.0)) {
        throw ConstraintViolation("theta scheme on this OU problem has no stationary law at h = " + format_number(h));
    }
    c.stationary_variance = s2 / denom;
    return c;
}

void solver_metrics(json& m, const SolverStats& s) {
    m["solver_solves"] = s.solves;
    m["solver_newton_iterations"] = s.newton_iterations;
    m["solver_fallbacks"] = s.fallbacks;
    m["solver_max_residual"] = json_number(s.max_residual);
}

}  // namespace

Profile parse_profile(std::string_view text) {
    if (text == "ci") return Profile::Ci;
    if (text == "full") return Profile::Full;
    throw ConstraintViolation("profile must be 'ci' or 'full', got '" + std::string(text) + "'");
}

std::string to_string(Profile profile) { return profile == Profile::Ci ? "ci" : "full"; }

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = {"moment", "contraction", "supmoment", "ou",
                                                   "cubic",  "rate",        "twod"};
    return names;
}

json json_number(double x) {
    if (std::isnan(x)) return nullptr;
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    return x;
}

ExperimentSpec default_spec(const std::string& experiment, Profile profile) {
    const bool ci = profile == Profile::Ci;
    ExperimentSpec s;
    s.name = experiment;
    s.profile = profile;
    const auto use = [&s](const std::string& problem) {
        s.problem_name = problem;
        s.problem = builtin(problem);
    };
    const auto paths = [&s](std::size_t run, std::size_t full) {
        s.n_paths = run;
        s.path_scale = static_cast<double>(run) / static_cast<double>(full);
    };
    if (experiment == "moment") {
        use("cubic1d");
        s.thetas = {1.0};
        s.hs = {0.5};
        s.horizon = 50.0;
        s.snapshot_every = 0.5;
        s.x0 = {2.0};
        paths(ci ? 1000 : 10000, 10000);
    } else if (experiment == "contraction") {
        use("cubic1d");
        s.thetas = {1.0};
        s.hs = {0.01};
        s.horizon = 10.0;
        s.snapshot_every = 0.1;
        s.x0 = {-2.0};
        s.y0 = {2.0};
        paths(ci ? 1000 : 10000, 10000);
    } else if (experiment == "supmoment") {
        use("ou");
        s.thetas = {0.5};
        s.hs = {0.001};
        s.horizon = 10.0;
        s.snapshot_every = 0.1;
        s.x0 = {2.0};
        paths(ci ? 1000 : 10000, 10000);
    } else if (experiment == "ou") {
        use("ou");
        s.thetas = {0.5};
        s.hs = {0.001};
        s.horizon = 10.0;
        s.snapshot_every = 0.1;
        s.x0 = {2.0};
        paths(1000, 1000);
    } else if (experiment == "cubic") {
        use("cubic1d");
        s.thetas = {1.0};
        s.hs = {0.01};
        s.horizon = 10.0;
        s.snapshot_every = 0.1;
        s.x0 = {2.0};
        paths(10000, 10000);
    } else if (experiment == "rate") {
        use("ou");
        s.thetas = ci ? std::vector<double>{0.0} : std::vector<double>{0.0, 0.25, 0.5, 1.0};
        s.hs = {0.5, 0.25, 0.125, 0.0625};
        s.horizon = 10.0;
        s.snapshot_every = 10.0;
        s.x0 = {2.0};
        s.reference_h = 1.0 / 1024.0;
        paths(ci ? (std::size_t{1} << 22) : (std::size_t{1} << 24), std::size_t{1} << 24);
    } else if (experiment == "twod") {
        use("cubic2d");
        s.thetas = {0.5};
        s.hs = {0.1};
        s.horizon = 20.0;
        s.snapshot_every = 0.5;
        s.x0 = {2.0, 3.0};
        s.bins = ci ? 24 : 100;
        paths(ci ? 20000 : 2000000, 2000000);
    } else {
        throw LookupError("unknown experiment '" + experiment + "'");
    }
    return s;
}

void validate(const ExperimentSpec& spec) {
    if (spec.thetas.empty() || spec.hs.empty()) throw ConstraintViolation("theta and h grids must be non-empty");
    for (double t : spec.thetas) {
        if (!(t >= 0.0 && t <= 1.0)) throw ConstraintViolation("theta must lie in [0, 1]");
    }
    if (!(spec.horizon > 0.0) || !std::isfinite(spec.horizon)) throw ConstraintViolation("horizon must be positive");
    const auto check_multiple = [&spec](double h, const char* what) {
        if (!(h > 0.0) || !std::isfinite(h)) throw ConstraintViolation(std::string(what) + " must be positive");
        const double ratio = spec.horizon / h;
        if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
            throw ConstraintViolation("horizon " + format_number(spec.horizon) + " is not a multiple of " + what +
                                      " " + format_number(h));
        }
    };
    for (double h : spec.hs) check_multiple(h, "h");
    if (spec.reference_h > 0.0) check_multiple(spec.reference_h, "reference h");
    if (!(spec.snapshot_every > 0.0)) throw ConstraintViolation("snapshot cadence must be positive");
    if (spec.n_paths < 1) throw ConstraintViolation("n_paths must be >= 1");
    if (spec.bins < 1) throw ConstraintViolation("bins must be >= 1");
    if (spec.x0.size() != spec.problem.problem.dim) {
        throw ConstraintViolation("x0 has " + std::to_string(spec.x0.size()) + " components, the problem has " +
                                  std::to_string(spec.problem.problem.dim));
    }
    if (!spec.y0.empty() && spec.y0.size() != spec.problem.problem.dim) {
        throw ConstraintViolation("y0 must match the problem dimension");
    }
}

RateFit fit_rate(std::vector<std::pair<double, double>> points, std::string label) {
    if (points.size() < 3) throw ConstraintViolation("a rate fit needs at least three points");
    std::vector<double> x, y;
    for (const auto& [h, e] : points) {
        if (!(h > 0.0) || !(e > 0.0) || !std::isfinite(h) || !std::isfinite(e)) {
            throw ConstraintViolation("rate fit needs positive finite step sizes and errors");
        }
        x.push_back(std::log(h));
        y.push_back(std::log(e));
    }
    const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
    if (*mn == *mx) throw ConstraintViolation("rate fit needs distinct step sizes");
    RateFit fit;
    fit.label = std::move(label);
    fit.points = std::move(points);
    std::tie(fit.slope, fit.intercept) = line_fit(x, y);
    double my = 0.0;
    for (double v : y) my += v;
    my /= static_cast<double>(y.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double pred = fit.intercept + fit.slope * x[i];
        ss_res += (y[i] - pred) * (y[i] - pred);
        ss_tot += (y[i] - my) * (y[i] - my);
    }
    fit.r_squared = ss_tot > 0.0 ? std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0) : 1.0;
    return fit;
}

json ExperimentReport::verdict_json(const ExperimentSpec& spec) const {
    json fits_json = json::array();
    for (const auto& f : fits) {
        json pts = json::array();
        for (const auto& [h, e] : f.points) pts.push_back({{"h", h}, {"error", json_number(e)}});
        json entry = {{"label", f.label}, {"exact", f.exact}, {"points", pts}};
        if (!f.exact) {
            entry["slope"] = json_number(f.slope);
            entry["intercept"] = json_number(f.intercept);
            entry["r_squared"] = json_number(f.r_squared);
        }
        fits_json.push_back(entry);
    }
    return {{"experiment", experiment},
            {"pass", pass},
            {"metrics", metrics},
            {"thresholds", thresholds},
            {"fits", fits_json},
            {"seed", spec.seed},
            {"profile", to_string(spec.profile)},
            {"problem", spec.problem_name},
            {"thetas", spec.thetas},
            {"hs", spec.hs},
            {"n_paths", spec.n_paths},
            {"path_scale", spec.path_scale}};
}

void write_outputs(const ExperimentReport& report, const ExperimentSpec& spec, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& t : report.tables) write_csv(dir / (t.name + ".csv"), t);
    std::ofstream out(dir / "verdict.json");
    if (!out) throw std::runtime_error("cannot write " + (dir / "verdict.json").string());
    out << report.verdict_json(spec).dump(2) << '\n';
}

ExperimentReport run_moment_bound(const ExperimentSpec& spec) {
    validate(spec);
    const ThetaScheme scheme = first_scheme(spec);
    const auto& [problem, bounds] = spec.problem;
    const RegimeReport regime = regime_report(scheme, bounds);
    const auto times = time_grid(spec.horizon, spec.snapshot_every);
    EnsembleOptions options;
    options.divergence_cap = kDivergenceCap;
    const auto ens = simulate_ensemble(problem, scheme, spec.x0, steps_for(spec.horizon, scheme.h), spec.n_paths,
                                       spec.seed, times, options);

    ExperimentReport r;
    r.experiment = spec.name;
    CsvTable table = make_table(spec, "moment_series", {"t", "second_moment", "se"});
    std::vector<double> late;
    double max_m = 0.0;
    std::optional<double> first_blow_up;
    for (std::size_t s = 0; s < times.size(); ++s) {
        const auto e = estimate(squared_norms(ens, s));
        table.add_row({times[s], e.mean, e.se});
        max_m = std::max(max_m, e.mean);
        if (!first_blow_up && !(e.mean <= kBlowUp)) first_blow_up = times[s];
        if (times[s] >= 0.5 * spec.horizon - 1e-12) late.push_back(e.mean);
    }
    const double late_max = *std::max_element(late.begin(), late.end());
    const double late_median = median(late);
    const bool divergence = ens.diverged_paths > 0 || first_blow_up.has_value();
    const bool bounded = !divergence && late_max <= 2.0 * late_median;
    const auto terminal = estimate(squared_norms(ens, times.size() - 1));

    r.pass = bounded == regime.valid;
    r.metrics = {{"predicted_bounded", regime.valid},
                 {"bounded", bounded},
                 {"divergence", divergence},
                 {"diverged_paths", ens.diverged_paths},
                 {"max_second_moment", json_number(max_m)},
                 {"late_window_max", json_number(late_max)},
                 {"late_window_median", json_number(late_median)},
                 {"terminal_second_moment", json_number(terminal.mean)},
                 {"terminal_second_moment_se", json_number(terminal.se)},
                 {"first_time_above_blow_up", first_blow_up ? json(*first_blow_up) : json(nullptr)},
                 {"regime_reasons", regime.reasons}};
    solver_metrics(r.metrics, ens.solver_stats);
    r.thresholds = {{"blow_up", kBlowUp}, {"late_window_ratio", 2.0}, {"divergence_cap", kDivergenceCap}};
    r.tables.push_back(std::move(table));
    return r;
}

ExperimentReport run_contraction(const ExperimentSpec& spec) {
    validate(spec);
    if (spec.y0.empty()) throw ConstraintViolation("contraction needs a second initial value y0");
    const ThetaScheme scheme = first_scheme(spec);
    const auto& [problem, bounds] = spec.problem;
    const std::size_t d = problem.dim;
    const auto times = time_grid(spec.horizon, spec.snapshot_every);
    const std::size_t n_steps = steps_for(spec.horizon, scheme.h);
    const auto steps = snapshot_steps(times, scheme.h, n_steps);
    const std::size_t n = spec.n_paths;

    double d0 = 0.0;
    for (std::size_t j = 0; j < d; ++j) d0 += (spec.x0[j] - spec.y0[j]) * (spec.x0[j] - spec.y0[j]);

    std::optional<double> ou_factor;
    if (problem.analytic && problem.analytic->ou_params) {
        const auto& ou = *problem.analytic->ou_params;
        const double rf = (1.0 - (1.0 - scheme.theta) * ou.alpha * scheme.h) / (1.0 + scheme.theta * ou.alpha * scheme.h);
        ou_factor = rf * rf;
    }

    std::vector<double> diff(steps.size() * n, 0.0);
    const std::size_t workers = std::min(worker_count(), n);
    std::vector<double> factor_error(workers, 0.0);
    std::vector<std::size_t> factor_checked(workers, 0);
    std::vector<SolverStats> stats(workers);
    const noise::EnsembleSeeding seeding{spec.seed};

    parallel_chunks(n, [&](std::size_t w, std::size_t begin, std::size_t end) {
        ThetaStepper sx(problem, scheme);
        ThetaStepper sy(problem, scheme);
        std::vector<double> x(d), y(d);
        for (std::size_t p = begin; p < end; ++p) {
            auto streams = noise::coupled_pair(seeding, p, scheme.h);
            std::copy(spec.x0.begin(), spec.x0.end(), x.begin());
            std::copy(spec.y0.begin(), spec.y0.end(), y.begin());
            double prev = d0;
            std::size_t next = 0;
            for (std::size_t k = 0;; ++k) {
                while (next < steps.size() && steps[next] == k) diff[next++ * n + p] = prev;
                if (next == steps.size()) break;
                sx.step(x, streams.first.next(), x);
                sy.step(y, streams.second.next(), y);
                double cur = 0.0;
                for (std::size_t j = 0; j < d; ++j) cur += (x[j] - y[j]) * (x[j] - y[j]);
                // Rounding in X and Y dominates once the difference is small; compare while it is not.
                if (ou_factor && d0 > 0.0 && prev >= 1e-4 * d0) {
                    factor_error[w] = std::max(factor_error[w], std::abs(cur / prev - *ou_factor));
                    ++factor_checked[w];
                }
                prev = cur;
            }
        }
        stats[w].merge(sx.stats());
        stats[w].merge(sy.stats());
    });

    ExperimentReport r;
    r.experiment = spec.name;
    CsvTable table = make_table(spec, "contraction_series", {"t", "diff_second_moment", "se"});
    std::vector<double> m(steps.size());
    for (std::size_t s = 0; s < steps.size(); ++s) {
        const auto e = estimate(std::vector<double>(diff.begin() + s * n, diff.begin() + (s + 1) * n));
        m[s] = e.mean;
        table.add_row({times[s], e.mean, e.se});
    }
    r.tables.push_back(std::move(table));

    bool monotone = true;
    for (std::size_t s = 1; s < m.size(); ++s) monotone = monotone && m[s] <= m[s - 1] * (1.0 + 1e-9);
    const bool decayed = d0 == 0.0 ? m.back() == 0.0 : m.back() < m.front();
    bool pass = decayed;

    std::vector<double> ft, fy;
    for (std::size_t s = 0; s < m.size(); ++s) {
        if (m[s] > 0.0 && std::isfinite(m[s])) {
            ft.push_back(times[s]);
            fy.push_back(std::log(m[s]));
        }
    }
    r.metrics["initial_squared_distance"] = d0;
    r.metrics["terminal_diff_second_moment"] = json_number(m.back());
    r.metrics["monotone_nonincreasing"] = monotone;
    r.metrics["decayed"] = decayed;
    r.metrics["decay_rate"] = ft.size() >= 2 ? json_number(-line_fit(ft, fy).first) : json(nullptr);

    if (ou_factor) {
        double err = 0.0;
        std::size_t checked = 0;
        for (std::size_t w = 0; w < workers; ++w) {
            err = std::max(err, factor_error[w]);
            checked += factor_checked[w];
        }
        const bool ok = err <= 1e-12;
        r.metrics["ou_step_factor"] = *ou_factor;
        r.metrics["ou_step_factor_max_error"] = err;
        r.metrics["ou_step_factor_checked_steps"] = checked;
        r.thresholds["ou_step_factor_tolerance"] = 1e-12;
        pass = pass && ok;
    }
    if (scheme.theta < 0.5 && bounds.drift_globally_lipschitz && d0 > 0.0) {
        const double c = contraction_factor(scheme.theta, scheme.h, bounds);
        double worst = 0.0;
        for (std::size_t s = 0; s < m.size(); ++s) {
            const double env = d0 * std::pow(c, static_cast<double>(steps[s]));
            worst = std::max(worst, m[s] / env);
        }
        const bool ok = worst <= 1.1 * (1.0 + 1e-12);
        r.metrics["envelope_factor"] = c;
        r.metrics["envelope_worst_ratio"] = json_number(worst);
        r.thresholds["envelope_slack"] = 1.1;
        pass = pass && ok;
    }
    SolverStats all;
    for (const auto& s : stats) all.merge(s);
    solver_metrics(r.metrics, all);
    r.pass = pass;
    return r;
}

ExperimentReport run_sup_moment(const ExperimentSpec& spec) {
    validate(spec);
    const ThetaScheme scheme = first_scheme(spec);
    const auto& problem = spec.problem.problem;
    const auto times = time_grid(spec.horizon, spec.snapshot_every);
    const std::size_t n_steps = steps_for(spec.horizon, scheme.h);
    const auto steps = snapshot_steps(times, scheme.h, n_steps);
    const std::size_t n = spec.n_paths;
    std::vector<double> sup(steps.size() * n);
    const std::size_t workers = std::min(worker_count(), n);
    std::vector<SolverStats> stats(workers);
    const noise::EnsembleSeeding seeding{spec.seed};

    parallel_chunks(n, [&](std::size_t w, std::size_t begin, std::size_t end) {
        ThetaStepper stepper(problem, scheme);
        for (std::size_t p = begin; p < end; ++p) {
            auto stream = seeding.stream(p, scheme.h);
            double running = 0.0;
            std::size_t next = 0;
            drive_path(stepper, spec.x0, steps.back(), stream, [&](std::size_t k, std::span<const double> x) {
                double sq = 0.0;
                for (double v : x) sq += v * v;
                running = std::max(running, sq);
                while (next < steps.size() && steps[next] == k) sup[next++ * n + p] = running;
                return next < steps.size();
            });
        }
        stats[w].merge(stepper.stats());
    });

    ExperimentReport r;
    r.experiment = spec.name;
    CsvTable table = make_table(spec, "sup_moment_series", {"t", "sup_second_moment", "se"});
    Estimate last;
    for (std::size_t s = 0; s < steps.size(); ++s) {
        last = estimate(std::vector<double>(sup.begin() + s * n, sup.begin() + (s + 1) * n));
        table.add_row({times[s], last.mean, last.se});
    }
    r.tables.push_back(std::move(table));
    const bool finite = std::isfinite(last.mean);
    bool pass = finite;
    r.metrics = {{"sup_second_moment", json_number(last.mean)}, {"se", json_number(last.se)}, {"finite", finite},
                 {"n_steps", n_steps}};
    if (problem.analytic && problem.analytic->stationary && n_steps > 1) {
        const double m_stat = reference_for(*problem.analytic->stationary).second_moment();
        const double ceiling = 10.0 * m_stat * std::log(static_cast<double>(n_steps));
        r.metrics["stationary_second_moment"] = m_stat;
        r.thresholds["ceiling"] = ceiling;
        pass = pass && last.mean < ceiling;
    }
    SolverStats all;
    for (const auto& s : stats) all.merge(s);
    solver_metrics(r.metrics, all);
    r.pass = pass;
    return r;
}

ExperimentReport run_ou_study(const ExperimentSpec& spec) {
    validate(spec);
    const OuParams& ou = require_ou(spec);
    const ThetaScheme scheme = first_scheme(spec);
    const auto& problem = spec.problem.problem;
    const OuClosedForm cf = ou_closed_form(ou, scheme.theta, scheme.h);
    const auto times = time_grid(spec.horizon, spec.snapshot_every);
    const auto ens =
        simulate_ensemble(problem, scheme, spec.x0, steps_for(spec.horizon, scheme.h), spec.n_paths, spec.seed, times);
    const double n = static_cast<double>(spec.n_paths);

    ExperimentReport r;
    r.experiment = spec.name;
    CsvTable moments_table = make_table(
        spec, "ou_moments", {"t", "mean", "mean_expected", "mean_se", "variance", "variance_expected", "variance_se"});
    bool mean_ok = true;
    bool var_ok = true;
    double worst_mean_z = 0.0;
    double worst_var_z = 0.0;
    double terminal_var = 0.0;
    double terminal_var_se = 0.0;
    for (std::size_t s = 0; s < times.size(); ++s) {
        const auto x = ens.component(s);
        const auto mom = moments(EmpiricalDistribution(x));
        const double mean = mom.mean[0];
        const double var = mom.variance[0];
        const double k = static_cast<double>(ens.steps[s]);
        const double mean_exp = std::pow(cf.r, k) * spec.x0[0];
        const double var_exp = cf.stationary_variance * (1.0 - std::pow(cf.r, 2.0 * k));
        const double mean_se = std::sqrt(var / n);
        const double var_se = var * std::sqrt(2.0 / (n - 1.0));
        moments_table.add_row({times[s], mean, mean_exp, mean_se, var, var_exp, var_se});
        const double mean_dev = std::abs(mean - mean_exp);
        const double var_dev = std::abs(var - var_exp);
        mean_ok = mean_ok && mean_dev <= kBandSe * mean_se + 1e-12 * (1.0 + std::abs(mean_exp));
        var_ok = var_ok && var_dev <= kBandSe * var_se + 1e-12 * (1.0 + var_exp);
        if (mean_se > 0.0) worst_mean_z = std::max(worst_mean_z, mean_dev / mean_se);
        if (var_se > 0.0) worst_var_z = std::max(worst_var_z, var_dev / var_se);
        terminal_var = var;
        terminal_var_se = var_se;
    }
    const auto ref = ReferenceDistribution::normal(0.0, cf.stationary_variance);
    auto ks = ks_timeline(spec, ens, ref);
    const double median_p = window_median(ks, 2.0, spec.horizon);
    const bool ks_ok = median_p > kPValue;

    r.pass = mean_ok && var_ok && ks_ok;
    r.metrics = {{"mean_within_band", mean_ok},
                 {"variance_within_band", var_ok},
                 {"worst_mean_z", worst_mean_z},
                 {"worst_variance_z", worst_var_z},
                 {"mean_factor", cf.r},
                 {"target_variance", cf.stationary_variance},
                 {"terminal_variance", terminal_var},
                 {"terminal_variance_se", terminal_var_se},
                 {"terminal_variance_z", std::abs(terminal_var - cf.stationary_variance) / terminal_var_se},
                 {"ks_median_p_window", json_number(median_p)},
                 {"ks_window", {2.0, spec.horizon}}};
    solver_metrics(r.metrics, ens.solver_stats);
    r.thresholds = {{"band_se", kBandSe}, {"p_value", kPValue}};
    r.tables.push_back(std::move(moments_table));
    r.tables.push_back(std::move(ks.table));
    r.tables.push_back(density_evolution(spec, ens));
    return r;
}

ExperimentReport run_cubic_study(const ExperimentSpec& spec) {
    validate(spec);
    const auto& problem = spec.problem.problem;
    if (!problem.analytic || !problem.analytic->stationary ||
        problem.analytic->stationary->kind != StationaryKind::QuarticGibbs) {
        throw ConstraintViolation("experiment '" + spec.name + "' needs the cubic1d problem");
    }
    const ThetaScheme scheme = first_scheme(spec);
    const auto times = time_grid(spec.horizon, spec.snapshot_every);
    const auto ens =
        simulate_ensemble(problem, scheme, spec.x0, steps_for(spec.horizon, scheme.h), spec.n_paths, spec.seed, times);
    const auto ref = quartic_gibbs();

    ExperimentReport r;
    r.experiment = spec.name;
    CsvTable m_table = make_table(spec, "moment_series", {"t", "second_moment", "se"});
    for (std::size_t s = 0; s < times.size(); ++s) {
        const auto e = estimate(squared_norms(ens, s));
        m_table.add_row({times[s], e.mean, e.se});
    }
    auto ks = ks_timeline(spec, ens, ref);
    const double from = std::min(4.0, spec.horizon);
    const double median_p = window_median(ks, from, spec.horizon);

    const auto terminal = ens.component(times.size() - 1);
    const auto mean_e = estimate(terminal);
    std::vector<double> sq(terminal.size());
    for (std::size_t i = 0; i < terminal.size(); ++i) sq[i] = terminal[i] * terminal[i];
    const auto m2_e = estimate(sq);
    const bool mean_ok = std::abs(mean_e.mean - ref.mean()) <= kBandSe * mean_e.se;
    const bool m2_ok = std::abs(m2_e.mean - ref.second_moment()) <= kBandSe * m2_e.se;
    const bool ks_ok = median_p > kPValue;

    r.pass = mean_ok && m2_ok && ks_ok;
    r.metrics = {{"ks_median_p_window", json_number(median_p)},
                 {"ks_window", {from, spec.horizon}},
                 {"terminal_mean", mean_e.mean},
                 {"terminal_mean_se", mean_e.se},
                 {"terminal_second_moment", m2_e.mean},
                 {"terminal_second_moment_se", m2_e.se},
                 {"reference_mean", ref.mean()},
                 {"reference_second_moment", ref.second_moment()},
                 {"reference_normalization", ref.normalization()},
                 {"mean_within_band", mean_ok},
                 {"second_moment_within_band", m2_ok}};
    solver_metrics(r.metrics, ens.solver_stats);
    r.thresholds = {{"band_se", kBandSe}, {"p_value", kPValue}};
    r.tables.push_back(std::move(m_table));
    r.tables.push_back(std::move(ks.table));
    r.tables.push_back(density_evolution(spec, ens));
    return r;
}

ExperimentReport run_rate_study(const ExperimentSpec& spec) {
    validate(spec);
    if (spec.hs.size() < 3) throw ConstraintViolation("a rate study needs at least three step sizes");
    const auto& problem = spec.problem.problem;
    if (problem.dim != 1) throw ConstraintViolation("the rate study supports one-dimensional problems");
    const std::vector<double> terminal_time = {spec.horizon};
    const bool is_ou = problem.analytic && problem.analytic->ou_params;

    // Reference law: analytic when known in closed form, otherwise a fine-step ensemble.
    std::optional<EmpiricalDistribution> reference_sample;
    double reference_variance = 0.0;
    ExperimentReport r;
    r.experiment = spec.name;
    if (is_ou) {
        const auto ref = reference_for(*problem.analytic->stationary);
        reference_sample.emplace(quantile_sample(ref, spec.n_paths));
        reference_variance = ref.variance();
        r.metrics["reference"] = "analytic";
    } else {
        if (!(spec.reference_h > 0.0)) throw ConstraintViolation("a self-referenced rate study needs reference_h");
        ThetaScheme fine;
        fine.theta = 1.0;
        fine.h = spec.reference_h;
        const auto ens = simulate_ensemble(problem, fine, spec.x0, steps_for(spec.horizon, fine.h), spec.n_paths,
                                           spec.seed ^ 0x5DEECE66DULL, terminal_time);
        reference_sample.emplace(ens.component(0));
        if (problem.analytic && problem.analytic->stationary) {
            reference_variance = reference_for(*problem.analytic->stationary).variance();
        } else {
            reference_variance = moments(*reference_sample).variance[0];
        }
        r.metrics["reference"] = "self";
        r.metrics["reference_h"] = spec.reference_h;
        r.metrics["reference_theta"] = 1.0;
    }
    r.metrics["reference_variance"] = reference_variance;

    bool pass = true;
    json per_theta = json::array();
    for (double theta : spec.thetas) {
        CsvTable table = make_table(spec, "rate_theta" + format_number(theta), {"h", "err_bl", "err_var"}, {theta},
                                    spec.hs);
        std::vector<std::pair<double, double>> bl_points, var_points;
        bool var_exact = is_ou;
        for (double h : spec.hs) {
            ThetaScheme scheme;
            scheme.theta = theta;
            scheme.h = h;
            if (is_ou) {
                const auto cf = ou_closed_form(*problem.analytic->ou_params, theta, h);
                var_exact = var_exact && std::abs(cf.stationary_variance - reference_variance) <= 1e-12;
            }
            const auto ens = simulate_ensemble(problem, scheme, spec.x0, steps_for(spec.horizon, h), spec.n_paths,
                                               spec.seed, terminal_time);
            const EmpiricalDistribution emp(ens.component(0));
            const double err_bl = bl_distance_upper(emp, *reference_sample);
            const double err_var = std::abs(moments(emp).variance[0] - reference_variance);
            table.add_row({h, err_bl, err_var});
            bl_points.emplace_back(h, err_bl);
            var_points.emplace_back(h, err_var);
        }
        const std::string tag = "theta=" + format_number(theta);
        json entry = {{"theta", theta}};
        RateFit var_fit;
        if (var_exact) {
            var_fit.label = tag + " variance";
            var_fit.points = var_points;
            var_fit.exact = true;
            entry["variance"] = "exact";
        } else {
            var_fit = fit_rate(var_points, tag + " variance");
            entry["variance_slope"] = var_fit.slope;
            entry["variance_r_squared"] = var_fit.r_squared;
            if (is_ou) {
                const bool ok = var_fit.slope >= 0.7 && var_fit.slope <= 1.3 && var_fit.r_squared >= 0.9;
                entry["variance_ok"] = ok;
                pass = pass && ok;
            }
        }
        const RateFit bl_fit = fit_rate(bl_points, tag + " bl");
        entry["bl_slope"] = bl_fit.slope;
        entry["bl_r_squared"] = bl_fit.r_squared;
        if (!is_ou) {
            const bool ok = bl_fit.slope > 0.0;
            entry["bl_ok"] = ok;
            pass = pass && ok;
        }
        per_theta.push_back(entry);
        r.fits.push_back(std::move(var_fit));
        r.fits.push_back(bl_fit);
        r.tables.push_back(std::move(table));
    }
    r.metrics["per_theta"] = per_theta;
    r.thresholds = {{"slope_min", 0.7}, {"slope_max", 1.3}, {"r_squared_min", 0.9}};
    r.pass = pass;
    return r;
}

ExperimentReport run_2d_study(const ExperimentSpec& spec) {
    validate(spec);
    const auto& [problem, bounds] = spec.problem;
    if (problem.dim != 2) throw ConstraintViolation("experiment '" + spec.name + "' needs a two-dimensional problem");
    const ThetaScheme scheme = first_scheme(spec);
    if (spec.horizon < 20.0) throw ConstraintViolation("the 2D study needs a horizon of at least 20");
    const std::vector<double> times = {0.5, 1.0, 18.0, 20.0};
    const auto ens =
        simulate_ensemble(problem, scheme, spec.x0, steps_for(spec.horizon, scheme.h), spec.n_paths, spec.seed, times);

    std::vector<PointCloud> clouds;
    for (const auto& snap : ens.snapshots) clouds.push_back(PointCloud{2, snap});
    const auto ranges = bounding_ranges(clouds);
    std::vector<DensityTable> hist;
    CsvTable table = make_table(spec, "density2d", {"t", "x", "y", "mass"});
    for (std::size_t s = 0; s < times.size(); ++s) {
        hist.push_back(histogram_density(clouds[s], spec.bins, ranges));
        const auto& d = hist.back();
        for (std::size_t ix = 0; ix < d.bins; ++ix) {
            for (std::size_t iy = 0; iy < d.bins; ++iy) {
                table.add_row({times[s], d.center(0, ix), d.center(1, iy), d.mass(ix * d.bins + iy)});
            }
        }
    }
    const double early = l1_mass_distance(hist[0], hist[1]);
    const double late = l1_mass_distance(hist[2], hist[3]);
    const bool stabilized = late < early / 10.0;

    const auto cond = check_conditions_sampled(problem, bounds, BoxSampler{-10.0, 10.0, spec.seed},
                                               spec.condition_samples);
    const auto& one_sided = cond.check("one_sided_lipschitz");
    const auto& diffusion = cond.check("diffusion_lipschitz");
    const bool one_sided_ok = one_sided.worst_ratio <= -4.0 + 1e-9;
    const bool diffusion_ok =
        std::abs(diffusion.worst_ratio - 2.0) <= 1e-12 && std::abs(diffusion.min_ratio - 2.0) <= 1e-12;
    const double combined = 2.0 * bounds.k2 + bounds.diffusion_k1();
    const bool combined_ok = combined <= -6.0;

    ExperimentReport r;
    r.experiment = spec.name;
    r.pass = stabilized && one_sided_ok && diffusion_ok && combined_ok;
    r.metrics = {{"l1_early", early},
                 {"l1_late", late},
                 {"stabilized", stabilized},
                 {"bins", spec.bins},
                 {"range_x", {ranges[0].lower, ranges[0].upper}},
                 {"range_y", {ranges[1].lower, ranges[1].upper}},
                 {"one_sided_worst_ratio", one_sided.worst_ratio},
                 {"diffusion_ratio_min", diffusion.min_ratio},
                 {"diffusion_ratio_max", diffusion.worst_ratio},
                 {"combined_2k2_plus_k1", combined},
                 {"condition_samples", cond.samples},
                 {"conditions_pass", cond.pass}};
    solver_metrics(r.metrics, ens.solver_stats);
    r.thresholds = {{"late_over_early", 0.1},
                    {"one_sided_max", -4.0 + 1e-9},
                    {"diffusion_ratio", 2.0},
                    {"diffusion_ratio_tolerance", 1e-12},
                    {"combined_max", -6.0}};
    r.tables.push_back(std::move(table));
    return r;
}

ExperimentReport run_experiment(const ExperimentSpec& spec) {
    if (spec.name == "moment") return run_moment_bound(spec);
    if (spec.name == "contraction") return run_contraction(spec);
    if (spec.name == "supmoment") return run_sup_moment(spec);
    if (spec.name == "ou") return run_ou_study(spec);
    if (spec.name == "cubic") return run_cubic_study(spec);
    if (spec.name == "rate") return run_rate_study(spec);
    if (spec.name == "twod") return run_2d_study(spec);
    throw LookupError("unknown experiment '" + spec.name + "'");
}

}  // namespace theta_stationary
