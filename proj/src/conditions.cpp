#include "theta_stationary/conditions.hpp"

#include "theta_stationary/errors.hpp"
#include "theta_stationary/noise.hpp"

#include <algorithm>
#include <cmath>

namespace theta_stationary {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

void require_finite(std::span<const double> v, std::span<const double> at, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw EvaluationError(std::string(what) + " returned a non-finite value at a sampled point",
                                  std::vector<double>(at.begin(), at.end()));
        }
    }
}

void draw_point(noise::UniformStream& stream, const BoxSampler& box, std::span<double> out) {
    for (double& v : out) v = box.lower + (box.upper - box.lower) * stream.next();
}

ConditionCheck make_check(const char* name, bool checked, double bound) {
    ConditionCheck c;
    c.name = name;
    c.checked = checked;
    c.bound = bound;
    return c;
}

struct Sample {
    const std::vector<double>& x;
    const std::vector<double>& y;
};

void record(ConditionCheck& check, double lhs, double rhs, double ratio, const Sample& s) {
    check.worst_ratio = std::max(check.worst_ratio, ratio);
    check.min_ratio = std::min(check.min_ratio, ratio);
    if (lhs > rhs + kConditionRelTol * std::max(std::abs(lhs), std::abs(rhs))) {
        if (check.violations == 0) {
            check.witness_x = s.x;
            check.witness_y = s.y;
        }
        ++check.violations;
    }
}

}  // namespace

const ConditionCheck& ConditionReport::check(const std::string& name) const {
    for (const auto& c : checks) {
        if (c.name == name) return c;
    }
    throw LookupError("no condition check named '" + name + "'");
}

ConditionReport check_conditions_sampled(const SdeProblem& problem, const CoefficientBounds& bounds,
                                         const BoxSampler& sampler, std::size_t n) {
    if (n == 0) throw ConstraintViolation("condition sampling needs n >= 1");
    if (!(sampler.lower < sampler.upper)) throw ConstraintViolation("sample box is empty");
    const std::size_t d = problem.dim;

    ConditionCheck drift_lip = make_check("drift_lipschitz", bounds.drift_globally_lipschitz, bounds.k1);
    ConditionCheck diff_lip = make_check("diffusion_lipschitz", true, bounds.diffusion_k1());
    ConditionCheck one_sided = make_check("one_sided_lipschitz", true, bounds.k2);
    ConditionCheck dissipative = make_check("dissipativity", true, bounds.mu);
    ConditionCheck diff_growth = make_check("diffusion_growth", true, bounds.sigma);
    ConditionCheck drift_growth = make_check("drift_growth", std::isfinite(bounds.kappa), bounds.kappa);

    noise::UniformStream stream(sampler.seed);
    std::vector<double> x(d), y(d), fx(d), fy(d), gx(d), gy(d);
    for (std::size_t s = 0; s < n; ++s) {
        draw_point(stream, sampler, x);
        draw_point(stream, sampler, y);
        problem.drift(x, fx);
        require_finite(fx, x, "drift");
        problem.drift(y, fy);
        require_finite(fy, y, "drift");
        problem.diffusion(x, gx);
        require_finite(gx, x, "diffusion");
        problem.diffusion(y, gy);
        require_finite(gy, y, "diffusion");

        const Sample sample{x, y};
        const double dxy = sq_dist(x, y);
        if (dxy > 0.0) {
            const double df = sq_dist(fx, fy);
            const double dg = sq_dist(gx, gy);
            double inner = 0.0;
            for (std::size_t i = 0; i < d; ++i) inner += (x[i] - y[i]) * (fx[i] - fy[i]);
            if (drift_lip.checked) record(drift_lip, df, bounds.k1 * dxy, df / dxy, sample);
            record(diff_lip, dg, bounds.diffusion_k1() * dxy, dg / dxy, sample);
            record(one_sided, inner, bounds.k2 * dxy, inner / dxy, sample);
        }

        const double xx = dot(x, x);
        if (xx > 0.0) {
            const double xf = dot(x, fx);
            record(dissipative, xf, bounds.mu * xx + bounds.a, (xf - bounds.a) / xx, sample);
            const double g2 = dot(gx, gx);
            record(diff_growth, g2, bounds.sigma * xx + bounds.b, (g2 - bounds.b) / xx, sample);
            if (drift_growth.checked) {
                const double f2 = dot(fx, fx);
                record(drift_growth, f2, bounds.kappa * xx + bounds.c, (f2 - bounds.c) / xx, sample);
            }
        }
    }

    ConditionReport report;
    report.samples = n;
    report.checks = {drift_lip, diff_lip, one_sided, dissipative, diff_growth, drift_growth};
    report.pass = std::all_of(report.checks.begin(), report.checks.end(),
                              [](const ConditionCheck& c) { return !c.checked || c.pass(); });
    return report;
}

InequalitySides dissipative_interpolation(const SdeProblem& problem, const CoefficientBounds& bounds,
                                          std::span<const double> x, double beta1, double beta2) {
    const std::size_t d = problem.dim;
    std::vector<double> f(d);
    problem.drift(x, f);
    require_finite(f, x, "drift");
    double n1 = 0.0;
    double n2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        n1 += (x[i] - beta1 * f[i]) * (x[i] - beta1 * f[i]);
        n2 += (x[i] - beta2 * f[i]) * (x[i] - beta2 * f[i]);
    }
    const double factor = (1.0 - bounds.mu * beta1) / (1.0 - bounds.mu * beta2);
    return {n1 + 2.0 * beta1 * bounds.a, factor * (n2 + 2.0 * beta2 * bounds.a)};
}

InequalitySides monotone_interpolation(const SdeProblem& problem, const CoefficientBounds& bounds,
                                       std::span<const double> x, std::span<const double> y, double lambda1,
                                       double lambda2) {
    const std::size_t d = problem.dim;
    std::vector<double> fx(d), fy(d);
    problem.drift(x, fx);
    require_finite(fx, x, "drift");
    problem.drift(y, fy);
    require_finite(fy, y, "drift");
    double n1 = 0.0;
    double n2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double u = x[i] - y[i];
        const double v = fx[i] - fy[i];
        n1 += (u - lambda1 * v) * (u - lambda1 * v);
        n2 += (u - lambda2 * v) * (u - lambda2 * v);
    }
    const double factor = (1.0 - bounds.k2 * lambda1) / (1.0 - bounds.k2 * lambda2);
    return {std::sqrt(n1), factor * std::sqrt(n2)};
}

AuxiliaryReport verify_auxiliary_inequalities(const SdeProblem& problem, const CoefficientBounds& bounds,
                                              const AuxiliarySampler& sampler, std::size_t n) {
    if (n == 0) throw ConstraintViolation("auxiliary sampling needs n >= 1");
    const std::size_t d = problem.dim;
    noise::UniformStream stream(sampler.box.seed);
    std::vector<double> x(d), y(d);
    AuxiliaryReport report;
    report.samples = n;

    const auto slack = [](const InequalitySides& s) { return (s.rhs - s.lhs) / std::max(1.0, std::abs(s.rhs)); };

    for (std::size_t s = 0; s < n; ++s) {
        draw_point(stream, sampler.box, x);
        draw_point(stream, sampler.box, y);
        double b1 = sampler.beta_max * stream.next();
        double b2 = sampler.beta_max * stream.next();
        if (b1 > b2) std::swap(b1, b2);
        double l1 = sampler.lambda_max * stream.next();
        double l2 = sampler.lambda_max * stream.next();
        if (l1 > l2) std::swap(l1, l2);

        const double s1 = slack(dissipative_interpolation(problem, bounds, x, b1, b2));
        if (s1 < report.worst_slack_dissipative) {
            report.worst_slack_dissipative = s1;
            if (s1 < -kAuxiliaryRelTol) report.witness_dissipative = AuxiliaryWitness{x, {}, b1, b2};
        }
        const double s2 = slack(monotone_interpolation(problem, bounds, x, y, l1, l2));
        if (s2 < report.worst_slack_monotone) {
            report.worst_slack_monotone = s2;
            if (s2 < -kAuxiliaryRelTol) report.witness_monotone = AuxiliaryWitness{x, y, l1, l2};
        }
    }
    report.pass = report.worst_slack_dissipative >= -kAuxiliaryRelTol &&
                  report.worst_slack_monotone >= -kAuxiliaryRelTol;
    return report;
}

}  // namespace theta_stationary
