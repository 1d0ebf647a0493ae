#include <doctest.h>

#include "theta_stationary/errors.hpp"
#include "theta_stationary/parallel.hpp"
#include "theta_stationary/stepper.hpp"

#include <cmath>
#include <cstdlib>
#include <vector>

using namespace theta_stationary;

namespace {

ThetaScheme scheme(double theta, double h) {
    ThetaScheme s;
    s.theta = theta;
    s.h = h;
    return s;
}

// Real root of x^3 + 3x - 2 = 0 (Cardano), frozen.
constexpr double kCubicRoot = 0.59607163798332152;

struct ThreadsEnv {
    explicit ThreadsEnv(const char* value) { setenv("THETA_STATIONARY_THREADS", value, 1); }
    ~ThreadsEnv() { unsetenv("THETA_STATIONARY_THREADS"); }
};

}  // namespace

TEST_SUITE("stepper") {

TEST_CASE("cubic implicit solve matches the closed-form root") {
    // G(x) = x + (x + x^3)/2 with theta h = 1; G(x) = 1 <=> x^3 + 3x - 2 = 0.
    const auto bp = builtin("cubic1d");
    const double rhs[] = {1.0};
    const auto x = solve_implicit(bp.problem, scheme(1.0, 1.0), rhs);
    CHECK(x[0] == doctest::Approx(kCubicRoot).epsilon(1e-14));
}

TEST_CASE("implicit map is increasing for one-sided Lipschitz drift") {
    const auto bp = builtin("cubic1d");
    double prev = -INFINITY;
    for (double x = -5.0; x <= 5.0; x += 0.01) {
        const double xs[] = {x};
        const double g = g_map(bp.problem, scheme(1.0, 0.7), xs)[0];
        CHECK(g > prev);
        prev = g;
    }
}

TEST_CASE("solve inverts g_map") {
    for (const char* name : {"cubic1d", "cubic2d", "ou"}) {
        CAPTURE(name);
        const auto bp = builtin(name);
        const auto s = scheme(0.75, 0.3);
        std::vector<double> rhs(bp.problem.dim);
        for (double base : {-7.0, -0.3, 0.0, 2.5, 40.0}) {
            for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = base + static_cast<double>(i);
            const auto x = solve_implicit(bp.problem, s, rhs);
            const auto back = g_map(bp.problem, s, x);
            for (std::size_t i = 0; i < rhs.size(); ++i) {
                CHECK(back[i] == doctest::Approx(rhs[i]).epsilon(1e-11).scale(1.0));
            }
        }
    }
}

TEST_CASE("finite-difference jacobian gives the same root") {
    const auto bp = builtin("cubic2d");
    auto s = scheme(1.0, 0.5);
    const double rhs[] = {3.0, -2.0};
    const auto analytic = solve_implicit(bp.problem, s, rhs);
    s.solver.jacobian = JacobianMode::CentralDifference;
    const auto fd = solve_implicit(bp.problem, s, rhs);
    CHECK(fd[0] == doctest::Approx(analytic[0]).epsilon(1e-11));
    CHECK(fd[1] == doctest::Approx(analytic[1]).epsilon(1e-11));
}

TEST_CASE("theta = 0 is Euler-Maruyama bit for bit") {
    const auto bp = builtin("cubic1d");
    const double h = 0.05;
    for (double x : {-2.0, 0.1, 1.3}) {
        for (double db : {-0.4, 0.0, 0.25}) {
            const double xs[] = {x};
            const double f = -0.5 * (x + x * x * x);
            CHECK(step(bp.problem, scheme(0.0, h), xs, db)[0] == x + h * f + 1.0 * db);
        }
    }
}

TEST_CASE("linear drift is solved exactly") {
    const auto bp = builtin("ou");  // alpha = sigma = 2
    for (double theta : {0.0, 0.3, 0.5, 1.0}) {
        CAPTURE(theta);
        const double h = 0.1;
        const double x = 1.7;
        const double db = 0.3;
        const double xs[] = {x};
        const double expected = (x - (1.0 - theta) * 2.0 * h * x + 2.0 * db) / (1.0 + theta * 2.0 * h);
        CHECK(step(bp.problem, scheme(theta, h), xs, db)[0] == doctest::Approx(expected).epsilon(1e-15));
    }
}

TEST_CASE("step output may alias its input") {
    const auto bp = builtin("cubic2d");
    ThetaStepper st(bp.problem, scheme(0.5, 0.1));
    std::vector<double> x = {2.0, 3.0};
    std::vector<double> y(2);
    st.step(x, 0.2, y);
    st.step(x, 0.2, x);
    CHECK(x == y);
    CHECK(st.stats().solves == 2);
    CHECK(st.stats().max_residual_ratio <= 1.0);
}

TEST_CASE("paths are reproducible") {
    const auto bp = builtin("cubic1d");
    const double x0[] = {2.0};
    auto s1 = noise::EnsembleSeeding{1}.stream(0, 0.01);
    auto s2 = noise::EnsembleSeeding{1}.stream(0, 0.01);
    const auto a = simulate_path(bp.problem, scheme(1.0, 0.01), x0, 10, s1);
    const auto b = simulate_path(bp.problem, scheme(1.0, 0.01), x0, 10, s2);
    CHECK(a.size() == 11);
    CHECK(a.states == b.states);
    CHECK(a.state(0)[0] == 2.0);
    CHECK(a.time(10) == doctest::Approx(0.1));
    CHECK_THROWS_AS(simulate_path(bp.problem, scheme(1.0, 0.01), std::vector<double>{1.0, 2.0}, 3, s1),
                    ConstraintViolation);
}

TEST_CASE("coupled paths under additive noise contract deterministically") {
    const auto bp = builtin("ou");
    const double x0[] = {-2.0};
    const double y0[] = {2.0};
    auto streams = noise::coupled_pair(noise::EnsembleSeeding{4}, 0, 0.1);
    const auto [px, py] = simulate_coupled(bp.problem, scheme(1.0, 0.1), x0, y0, 50, streams);
    const double r = 1.0 / 1.2;
    for (std::size_t k = 0; k <= 50; ++k) {
        CHECK(py.state(k)[0] - px.state(k)[0] == doctest::Approx(4.0 * std::pow(r, static_cast<double>(k))));
    }
}

TEST_CASE("snapshot grid") {
    const double times[] = {0.0, 0.5, 1.0};
    CHECK(snapshot_steps(times, 0.1, 10) == std::vector<std::size_t>{0, 5, 10});
    const double off[] = {0.55};
    CHECK_THROWS_AS(snapshot_steps(off, 0.1, 10), ConstraintViolation);
    const double late[] = {2.0};
    CHECK_THROWS_AS(snapshot_steps(late, 0.1, 10), ConstraintViolation);
}

TEST_CASE("ensembles do not depend on the worker count") {
    const auto bp = builtin("cubic2d");
    const double x0[] = {2.0, 3.0};
    const double times[] = {0.5, 1.0};
    EnsembleResult one, three;
    {
        ThreadsEnv env("1");
        one = simulate_ensemble(bp.problem, scheme(0.5, 0.1), x0, 10, 257, 6, times);
    }
    {
        ThreadsEnv env("3");
        three = simulate_ensemble(bp.problem, scheme(0.5, 0.1), x0, 10, 257, 6, times);
    }
    CHECK(one.snapshots == three.snapshots);
    CHECK(one.seeds == three.seeds);
    CHECK(one.solver_stats.solves == three.solver_stats.solves);
    CHECK(one.component(1, 1).size() == 257);
}

TEST_CASE("ensemble path p replays simulate_path with the same seed") {
    const auto bp = builtin("ou");
    const double x0[] = {2.0};
    const double times[] = {0.2};
    const auto ens = simulate_ensemble(bp.problem, scheme(0.5, 0.01), x0, 20, 5, 77, times);
    auto stream = noise::EnsembleSeeding{77}.stream(3, 0.01);
    const auto path = simulate_path(bp.problem, scheme(0.5, 0.01), x0, 20, stream);
    CHECK(ens.snapshots[0][3] == path.state(20)[0]);
}

TEST_CASE("explicit blow-up: error by default, marked with a cap") {
    const auto bp = builtin("cubic1d");
    const double x0[] = {3.0};
    const double times[] = {10.0};
    CHECK_THROWS_AS(simulate_ensemble(bp.problem, scheme(0.0, 0.5), x0, 20, 4, 1, times), EvaluationError);
    EnsembleOptions options;
    options.divergence_cap = 1e100;
    const auto ens = simulate_ensemble(bp.problem, scheme(0.0, 0.5), x0, 20, 4, 1, times, options);
    CHECK(ens.diverged_paths == 4);
    for (double v : ens.snapshots[0]) CHECK(std::isinf(v));
}

TEST_CASE("non-invertible implicit map raises SolverFailure with the step") {
    // G(x) = x - (x^2 + 10) < 0 everywhere, so G(x) = rhs >= 0 has no root.
    SdeProblem p;
    p.name = "no_root";
    p.dim = 1;
    p.drift = [](std::span<const double> x, std::span<double> f) { f[0] = x[0] * x[0] + 10.0; };
    p.diffusion = [](std::span<const double>, std::span<double> g) { g[0] = 0.0; };
    const double x0[] = {20.0};
    auto stream = noise::IncrementStream(1, 1.0);
    try {
        simulate_path(p, scheme(1.0, 1.0), x0, 3, stream);
        FAIL("expected a solver failure");
    } catch (const SolverFailure& e) {
        REQUIRE(e.step);
        CHECK(*e.step == 0);
        CHECK(std::string(e.what()).find("step 0") != std::string::npos);
        CHECK(e.last_iterate().size() == 1);
    }
}

TEST_CASE("parallel chunks cover every index once and rethrow deterministically") {
    ThreadsEnv env("4");
    std::vector<int> hits(1000, 0);
    parallel_chunks(1000, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) ++hits[i];
    });
    for (int h : hits) CHECK(h == 1);
    CHECK_THROWS_WITH(parallel_chunks(100,
                                      [](std::size_t w, std::size_t, std::size_t) {
                                          throw std::runtime_error("worker " + std::to_string(w));
                                      }),
                      "worker 0");
}

}  // TEST_SUITE
