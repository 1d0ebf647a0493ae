#include "theta_stationary/model.hpp"

#include "theta_stationary/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace theta_stationary {

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

std::vector<double> SdeProblem::eval_drift(std::span<const double> x) const {
    std::vector<double> out(dim);
    drift(x, out);
    return out;
}

std::vector<double> SdeProblem::eval_diffusion(std::span<const double> x) const {
    std::vector<double> out(dim);
    diffusion(x, out);
    return out;
}

CoefficientBounds with_positive_offsets(CoefficientBounds bounds) {
    for (double* offset : {&bounds.a, &bounds.b, &bounds.c}) {
        if (*offset == 0.0) *offset = kMinOffset;
    }
    return bounds;
}

void validate(const CoefficientBounds& bounds) {
    const auto fail = [](const std::string& what) { throw ConstraintViolation(what); };
    if (!(bounds.k1 >= 0.0) || !finite(bounds.k1)) fail("k1 >= 0 violated (k1 = " + fmt(bounds.k1) + ")");
    if (bounds.k1_diffusion && (!(*bounds.k1_diffusion >= 0.0) || *bounds.k1_diffusion > bounds.k1)) {
        fail("0 <= k1_diffusion <= k1 violated");
    }
    if (!(bounds.k2 < 0.0)) fail("k2 < 0 violated (k2 = " + fmt(bounds.k2) + ")");
    if (!(bounds.mu < 0.0)) fail("mu < 0 violated (mu = " + fmt(bounds.mu) + ")");
    if (!(bounds.a > 0.0)) fail("a > 0 violated (a = " + fmt(bounds.a) + ")");
    if (!(bounds.b > 0.0)) fail("b > 0 violated (b = " + fmt(bounds.b) + ")");
    if (!(bounds.c > 0.0)) fail("c > 0 violated (c = " + fmt(bounds.c) + ")");
    if (!(bounds.sigma >= 0.0)) fail("sigma >= 0 violated (sigma = " + fmt(bounds.sigma) + ")");
    if (!(bounds.kappa >= 0.0)) fail("kappa >= 0 violated (kappa = " + fmt(bounds.kappa) + ")");
    if (bounds.drift_globally_lipschitz && !finite(bounds.kappa)) {
        fail("a globally Lipschitz drift needs a finite kappa");
    }
    const double k1g = bounds.diffusion_k1();
    if (!(2.0 * bounds.k2 + k1g < 0.0)) {
        fail("2*k2 + k1 < 0 violated (2*k2 + k1 = " + fmt(2.0 * bounds.k2 + k1g) + ")");
    }
    if (!(2.0 * bounds.mu + bounds.sigma < 0.0)) {
        fail("2*mu + sigma < 0 violated (2*mu + sigma = " + fmt(2.0 * bounds.mu + bounds.sigma) + ")");
    }
}

void validate(const ImplicitSolverConfig& config) {
    if (!(config.rel_tol > 0.0) || !(config.abs_tol > 0.0)) {
        throw ConstraintViolation("solver tolerances must be positive");
    }
    if (config.max_iters < 1) throw ConstraintViolation("solver max_iters must be >= 1");
    if (!(config.fd_step > 0.0)) throw ConstraintViolation("finite-difference step must be positive");
    if (config.max_halvings < 0 || config.fallback_iters < 0) {
        throw ConstraintViolation("halving and fallback counts must be nonnegative");
    }
}

void validate(const ThetaScheme& scheme) {
    if (!(scheme.theta >= 0.0 && scheme.theta <= 1.0)) {
        throw ConstraintViolation("theta must lie in [0, 1] (theta = " + fmt(scheme.theta) + ")");
    }
    if (!(scheme.h >= 0.0) || !finite(scheme.h)) {
        throw ConstraintViolation("step size h must be finite and >= 0 (h = " + fmt(scheme.h) + ")");
    }
    validate(scheme.solver);
}

StepThresholds max_stable_step(double theta, const CoefficientBounds& bounds) {
    if (!(theta >= 0.0 && theta <= 1.0)) {
        throw ConstraintViolation("theta must lie in [0, 1] (theta = " + fmt(theta) + ")");
    }
    validate(bounds);
    if (theta >= 0.5) return {};
    if (!bounds.drift_globally_lipschitz) {
        throw ConstraintViolation(
            "theta < 1/2 requires a globally Lipschitz drift with linear growth (kappa finite)");
    }
    const double w = (1.0 - theta) * (1.0 - theta);
    StepThresholds t;
    t.moment = bounds.kappa == 0.0 ? kInfinity : -(2.0 * bounds.mu + bounds.sigma) / (w * bounds.kappa);
    t.contraction =
        bounds.k1 == 0.0 ? kInfinity : -(2.0 * bounds.k2 + bounds.diffusion_k1()) / (w * bounds.k1);
    if (!(t.moment > 0.0)) throw ConstraintViolation("degenerate moment step bound (h_max = 0)");
    if (!(t.contraction > 0.0)) throw ConstraintViolation("degenerate contraction step bound (h_max = 0)");
    return t;
}

double moment_factor(double theta, double h, const CoefficientBounds& bounds) {
    const double w = (1.0 - theta) * (1.0 - theta);
    return (1.0 + w * h * h * bounds.kappa + h * bounds.sigma + 2.0 * (1.0 - theta) * h * bounds.mu) /
           (1.0 - 2.0 * bounds.mu * theta * h);
}

double contraction_factor(double theta, double h, const CoefficientBounds& bounds) {
    const double w = (1.0 - theta) * (1.0 - theta);
    return (1.0 + w * h * h * bounds.k1 + h * bounds.diffusion_k1() + 2.0 * bounds.k2 * (1.0 - theta) * h) /
           (1.0 - 2.0 * bounds.k2 * theta * h);
}

ImplicitRegimeConstants implicit_regime_constants(double theta, double h,
                                                  const CoefficientBounds& bounds) {
    ImplicitRegimeConstants c;
    const double mu = bounds.mu;
    const double sigma = bounds.sigma;
    c.theta_star = 1.0 + sigma / (4.0 * mu);
    c.lambda = std::min((2.0 * mu + sigma) / (2.0 * mu), 2.0 * theta - 1.0);
    c.n_h = (1.0 - mu * (1.0 - theta) * h) / (1.0 - mu * (1.0 - theta + c.lambda) * h);
    c.psi = 4.0 * (1.0 - theta) + sigma + 2.0 * c.n_h * mu * (2.0 * theta - 1.0 - c.lambda);

    const double k1 = bounds.diffusion_k1();
    const double k2 = bounds.k2;
    c.theta_star_contraction = 1.0 + k1 / (4.0 * k2);
    c.lambda_contraction = std::min((2.0 * k2 + k1) / (2.0 * k2), 2.0 * theta - 1.0);
    const double ratio =
        (1.0 - k2 * (1.0 - theta) * h) / (1.0 - k2 * (1.0 - theta + c.lambda_contraction) * h);
    c.l_h = ratio * ratio;
    c.phi = 4.0 * (1.0 - theta) * k2 + k1 + 2.0 * (2.0 * theta - 1.0 - c.lambda_contraction) * k2 * c.l_h;
    return c;
}

RegimeReport regime_report(const ThetaScheme& scheme, const CoefficientBounds& bounds) {
    RegimeReport report;
    const double theta = scheme.theta;
    const double h = scheme.h;
    report.regime = theta < 0.5 ? Regime::ThetaBelowHalf : Regime::ThetaAtLeastHalf;

    auto invalid = [&report](std::string reason) {
        report.valid = false;
        report.reasons.push_back(std::move(reason));
    };

    if (!(theta >= 0.0 && theta <= 1.0)) invalid("theta = " + fmt(theta) + " outside [0, 1]");
    if (!(h > 0.0) || !finite(h)) invalid("step size h = " + fmt(h) + " must be positive and finite");

    try {
        validate(bounds);
    } catch (const ConstraintViolation& e) {
        invalid(e.what());
        return report;
    }
    if (!(theta * h * bounds.k2 < 1.0)) {
        invalid("implicit map not invertible: theta*h*k2 = " + fmt(theta * h * bounds.k2) + " >= 1");
    }

    if (report.regime == Regime::ThetaAtLeastHalf) {
        auto constants = implicit_regime_constants(theta, h, bounds);
        report.theta_star = constants.theta_star;
        report.lambda = constants.lambda;
        report.implicit_constants = constants;
        return report;
    }

    try {
        const auto t = max_stable_step(theta, bounds);
        report.h_max_moment = t.moment;
        report.h_max_contraction = t.contraction;
        if (!(h < t.moment)) {
            invalid("h = " + fmt(h) + " exceeds the mean-square moment step bound "
                    "-(2mu+sigma)/((1-theta)^2 kappa) = " + fmt(t.moment));
        }
        if (!(h < t.contraction)) {
            invalid("h = " + fmt(h) + " exceeds the mean-square contraction step bound "
                    "-(2k2+k1)/((1-theta)^2 k1) = " + fmt(t.contraction));
        }
    } catch (const ConstraintViolation& e) {
        report.h_max_moment = 0.0;
        report.h_max_contraction = 0.0;
        invalid(e.what());
    }
    return report;
}

BuiltinProblem make_ou(double alpha, double sigma) {
    if (!(alpha > 0.0) || !(sigma > 0.0)) throw ConstraintViolation("ou needs alpha > 0 and sigma > 0");
    BuiltinProblem out;
    auto& p = out.problem;
    p.name = "ou";
    p.dim = 1;
    p.drift = [alpha](std::span<const double> x, std::span<double> f) { f[0] = -alpha * x[0]; };
    p.diffusion = [sigma](std::span<const double>, std::span<double> g) { g[0] = sigma; };
    p.drift_jacobian = [alpha](std::span<const double>, std::span<double> j) { j[0] = -alpha; };
    StationaryDescriptor stationary{StationaryKind::Normal, 0.0, sigma * sigma / (2.0 * alpha)};
    p.analytic = AnalyticInfo{stationary, OuParams{alpha, sigma}};

    CoefficientBounds& b = out.bounds;
    b.k1 = alpha * alpha;
    b.k1_diffusion = 0.0;
    b.k2 = -alpha;
    b.mu = -alpha;
    b.a = 0.0;
    b.sigma = 0.0;
    b.b = sigma * sigma;
    b.kappa = alpha * alpha;
    b.c = 0.0;
    b.drift_globally_lipschitz = true;
    b = with_positive_offsets(b);
    return out;
}

namespace {

BuiltinProblem make_cubic1d() {
    BuiltinProblem out;
    auto& p = out.problem;
    p.name = "cubic1d";
    p.dim = 1;
    p.drift = [](std::span<const double> x, std::span<double> f) {
        f[0] = -0.5 * (x[0] + x[0] * x[0] * x[0]);
    };
    p.diffusion = [](std::span<const double>, std::span<double> g) { g[0] = 1.0; };
    p.drift_jacobian = [](std::span<const double> x, std::span<double> j) {
        j[0] = -0.5 * (1.0 + 3.0 * x[0] * x[0]);
    };
    p.analytic = AnalyticInfo{StationaryDescriptor{StationaryKind::QuarticGibbs, 0.0, 0.0}, std::nullopt};

    // <x, f(x)> = -x^2/2 - x^4/2 <= -x^2 + 1/8 (equality at x^2 = 1/2).
    CoefficientBounds& b = out.bounds;
    b.k1 = 0.0;
    b.k2 = -0.5;
    b.mu = -1.0;
    b.a = 0.125;
    b.sigma = 0.0;
    b.b = 1.0;
    b.kappa = kInfinity;
    b.c = kInfinity;
    b.drift_globally_lipschitz = false;
    return out;
}

BuiltinProblem make_cubic2d() {
    BuiltinProblem out;
    auto& p = out.problem;
    p.name = "cubic2d";
    p.dim = 2;
    p.drift = [](std::span<const double> x, std::span<double> f) {
        const double x1 = x[0];
        const double x2 = x[1];
        f[0] = -x1 * x1 * x1 - 5.0 * x1 + x2 + 5.0;
        f[1] = -x2 * x2 * x2 - x1 - 5.0 * x2 + 5.0;
    };
    p.diffusion = [](std::span<const double> x, std::span<double> g) {
        g[0] = x[0] - x[1] + 3.0;
        g[1] = -x[0] - x[1] + 3.0;
    };
    p.drift_jacobian = [](std::span<const double> x, std::span<double> j) {
        j[0] = -3.0 * x[0] * x[0] - 5.0;
        j[1] = 1.0;
        j[2] = -1.0;
        j[3] = -3.0 * x[1] * x[1] - 5.0;
    };

    // <x,f(x)> = -x1^4 - x2^4 - 5|x|^2 + 5(x1 + x2) <= -4|x|^2 + 2 max_t(-t^4 - t^2 + 5t),
    // and max_t(-t^4 - t^2 + 5t) = 3.0373 at t = 0.9237.
    // |g(x)|^2 = 2|x|^2 - 12 x2 + 18 <= 3|x|^2 + 54.
    CoefficientBounds& b = out.bounds;
    b.k1 = 2.0;
    b.k2 = -4.0;
    b.mu = -4.0;
    b.a = 6.1;
    b.sigma = 3.0;
    b.b = 54.0;
    b.kappa = kInfinity;
    b.c = kInfinity;
    b.drift_globally_lipschitz = false;
    return out;
}

}  // namespace

BuiltinProblem builtin(const std::string& name) {
    if (name == "ou") return make_ou(2.0, 2.0);
    if (name == "cubic1d") return make_cubic1d();
    if (name == "cubic2d") return make_cubic2d();
    throw LookupError("unknown built-in problem '" + name + "' (expected ou, cubic1d or cubic2d)");
}

std::vector<std::string> builtin_names() { return {"ou", "cubic1d", "cubic2d"}; }

}  // namespace theta_stationary
