#include <doctest.h>

#include "theta_stationary/conditions.hpp"
#include "theta_stationary/errors.hpp"

#include <cmath>

using namespace theta_stationary;

TEST_SUITE("conditions") {

TEST_CASE("certified bounds survive sampling") {
    for (const auto& name : builtin_names()) {
        CAPTURE(name);
        const auto bp = builtin(name);
        const auto report = check_conditions_sampled(bp.problem, bp.bounds, BoxSampler{-10.0, 10.0, 7}, 5000);
        CHECK(report.pass);
        CHECK(report.samples == 5000);
        for (const auto& c : report.checks) {
            CAPTURE(c.name);
            if (c.checked) CHECK(c.worst_ratio <= c.bound + 1e-9);
        }
    }
}

TEST_CASE("cubic2d constants") {
    const auto bp = builtin("cubic2d");
    const auto r = check_conditions_sampled(bp.problem, bp.bounds, BoxSampler{-10.0, 10.0, 3}, 10000);
    CHECK(r.check("one_sided_lipschitz").worst_ratio <= -4.0 + 1e-9);
    CHECK(r.check("diffusion_lipschitz").worst_ratio == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(r.check("diffusion_lipschitz").min_ratio == doctest::Approx(2.0).epsilon(1e-12));
    CHECK_FALSE(r.check("drift_lipschitz").checked);
    CHECK_FALSE(r.check("drift_growth").checked);
    CHECK_THROWS_AS(r.check("nonexistent"), LookupError);
}

TEST_CASE("ou ratios are attained exactly") {
    const auto bp = builtin("ou");
    const auto r = check_conditions_sampled(bp.problem, bp.bounds, BoxSampler{-10.0, 10.0, 11}, 2000);
    CHECK(r.check("one_sided_lipschitz").worst_ratio == doctest::Approx(-2.0));
    CHECK(r.check("drift_lipschitz").worst_ratio == doctest::Approx(4.0));
    CHECK(r.check("diffusion_lipschitz").worst_ratio == doctest::Approx(0.0));
}

TEST_CASE("an overstated bound is falsified with a witness") {
    auto bp = builtin("ou");
    bp.bounds.k2 = -3.0;
    const auto r = check_conditions_sampled(bp.problem, bp.bounds, BoxSampler{-10.0, 10.0, 1}, 100);
    CHECK_FALSE(r.pass);
    const auto& c = r.check("one_sided_lipschitz");
    CHECK(c.violations == 100);
    CHECK(c.witness_x.size() == 1);
    CHECK(c.witness_y.size() == 1);
}

TEST_CASE("sampling is reproducible") {
    const auto bp = builtin("cubic1d");
    const auto a = check_conditions_sampled(bp.problem, bp.bounds, BoxSampler{-5.0, 5.0, 42}, 300);
    const auto b = check_conditions_sampled(bp.problem, bp.bounds, BoxSampler{-5.0, 5.0, 42}, 300);
    for (std::size_t i = 0; i < a.checks.size(); ++i) CHECK(a.checks[i].worst_ratio == b.checks[i].worst_ratio);
}

TEST_CASE("non-finite coefficients raise") {
    auto bp = builtin("ou");
    bp.problem.drift = [](std::span<const double> x, std::span<double> f) { f[0] = x[0] > 0 ? NAN : -x[0]; };
    CHECK_THROWS_AS(check_conditions_sampled(bp.problem, bp.bounds, BoxSampler{}, 100), EvaluationError);
    CHECK_THROWS_AS(check_conditions_sampled(builtin("ou").problem, bp.bounds, BoxSampler{}, 0), ConstraintViolation);
}

TEST_CASE("interpolation inequalities at fixed points") {
    const auto bp = builtin("cubic1d");
    const double x[] = {1.7};
    const double y[] = {-0.4};
    const auto equal = dissipative_interpolation(bp.problem, bp.bounds, x, 0.3, 0.3);
    CHECK(equal.lhs == doctest::Approx(equal.rhs));
    const auto s = dissipative_interpolation(bp.problem, bp.bounds, x, 0.1, 0.9);
    CHECK(s.lhs <= s.rhs);
    const auto m = monotone_interpolation(bp.problem, bp.bounds, x, y, 0.2, 0.7);
    CHECK(m.lhs <= m.rhs);
}

TEST_CASE("auxiliary inequalities hold on ou and cubic1d") {
    for (const char* name : {"ou", "cubic1d", "cubic2d"}) {
        CAPTURE(name);
        const auto bp = builtin(name);
        AuxiliarySampler sampler;
        sampler.box.seed = 5;
        const auto r = verify_auxiliary_inequalities(bp.problem, bp.bounds, sampler, 10000);
        CHECK(r.pass);
        CHECK(r.worst_slack_dissipative >= -1e-10);
        CHECK(r.worst_slack_monotone >= -1e-10);
        CHECK_FALSE(r.witness_dissipative);
    }
}

TEST_CASE("auxiliary inequalities detect a wrong one-sided constant") {
    auto bp = builtin("cubic1d");
    bp.bounds.k2 = -50.0;
    AuxiliarySampler sampler;
    const auto r = verify_auxiliary_inequalities(bp.problem, bp.bounds, sampler, 2000);
    CHECK_FALSE(r.pass);
    REQUIRE(r.witness_monotone);
    CHECK(r.witness_monotone->first <= r.witness_monotone->second);
}

}  // TEST_SUITE
