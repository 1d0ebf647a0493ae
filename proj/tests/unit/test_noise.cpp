#include <doctest.h>

#include "theta_stationary/empirical.hpp"
#include "theta_stationary/errors.hpp"
#include "theta_stationary/noise.hpp"
#include "theta_stationary/reference.hpp"

#include <cmath>
#include <set>
#include <vector>

using namespace theta_stationary;
using namespace theta_stationary::noise;

TEST_SUITE("noise") {

// Known-answer vectors of the Random123 distribution.
TEST_CASE("philox4x32-10 known answers") {
    CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("open unit mapping") {
    CHECK(to_open_unit(0, 0) == std::ldexp(0.5, -52));
    CHECK(to_open_unit(0xffffffff, 0xffffffff) == 1.0 - std::ldexp(0.5, -52));
    CHECK(to_open_unit(0x80000000, 0) == doctest::Approx(0.5));
}

TEST_CASE("inverse normal accuracy") {
    struct Ref {
        double p;
        double z;
    };
    // Reference quantiles computed with an independent high-precision routine.
    const Ref refs[] = {{1e-10, -6.3613409024040557},   {0.001, -3.0902323061678132},
                        {0.02425, -1.9729610513118849}, {0.3, -0.52440051270804089},
                        {0.9, 1.2815515655446004},      {0.999999, 4.7534243088170873}};
    for (const auto& r : refs) {
        CAPTURE(r.p);
        CHECK(std::abs(normal_quantile(r.p) - r.z) <= 1.2e-9 * std::abs(r.z));
    }
    CHECK(normal_quantile(0.5) == 0.0);
    for (double p : {1e-6, 0.01, 0.2, 0.45}) CHECK(normal_quantile(p) == doctest::Approx(-normal_quantile(1.0 - p)));
}

TEST_CASE("increment streams are reproducible and addressable") {
    IncrementStream a(123, 0.01);
    IncrementStream b(123, 0.01);
    std::vector<double> first;
    for (int i = 0; i < 11; ++i) {
        const double v = a.next();
        CHECK(v == b.next());
        CHECK(v == a.at(static_cast<std::uint64_t>(i)));
        first.push_back(v);
    }
    b.seek(4);
    CHECK(b.next() == first[4]);
    CHECK(b.next() == first[5]);
    CHECK(a.index() == 11);
    CHECK(a.at(3) == doctest::Approx(0.1 * a.standard_normal_at(3)));
    IncrementStream c(124, 0.01);
    CHECK(c.next() != first[0]);
}

TEST_CASE("increment scaling") {
    IncrementStream zero(9, 0.0);
    for (int i = 0; i < 5; ++i) CHECK(zero.next() == 0.0);
    CHECK_THROWS_AS(IncrementStream(9, -1.0), ConstraintViolation);
    IncrementStream s1(9, 1.0);
    IncrementStream s4(9, 4.0);
    for (int i = 0; i < 5; ++i) CHECK(s4.next() == 2.0 * s1.next());
}

TEST_CASE("increment moments") {
    const int n = 200000;
    const double h = 0.25;
    IncrementStream s(2024, h);
    double sum = 0.0, sq = 0.0, quart = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = s.next();
        sum += v;
        sq += v * v;
        quart += v * v * v * v;
    }
    const double mean = sum / n;
    const double var = sq / n;
    CHECK(std::abs(mean) < 5.0 * std::sqrt(h / n));
    CHECK(std::abs(var - h) < 5.0 * h * std::sqrt(2.0 / n));
    CHECK(quart / n == doctest::Approx(3.0 * h * h).epsilon(0.03));
}

TEST_CASE("standard normals pass K-S for most seeds") {
    const auto ref = ReferenceDistribution::normal(0.0, 1.0);
    int passed = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        IncrementStream s(EnsembleSeeding{seed}.path_seed(0), 1.0);
        std::vector<double> xs(5000);
        for (auto& x : xs) x = s.next();
        if (ks_test(EmpiricalDistribution(xs), ref).p_value > 0.01) ++passed;
    }
    CHECK(passed >= 17);
}

TEST_CASE("lag-one correlation is small") {
    IncrementStream s(77, 1.0);
    const int n = 100000;
    double prev = s.next();
    double acc = 0.0;
    for (int i = 1; i < n; ++i) {
        const double v = s.next();
        acc += v * prev;
        prev = v;
    }
    CHECK(std::abs(acc / n) < 5.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("ensemble seeding") {
    const EnsembleSeeding seeding{99};
    std::set<std::uint64_t> seeds;
    for (std::uint64_t p = 0; p < 10000; ++p) seeds.insert(seeding.path_seed(p));
    CHECK(seeds.size() == 10000);
    CHECK(EnsembleSeeding{99}.path_seed(5) == seeding.path_seed(5));
    CHECK(EnsembleSeeding{100}.path_seed(5) != seeding.path_seed(5));
    CHECK(mix64(0) == 0);
    CHECK(mix64(1) != 1);
}

TEST_CASE("coupled pairs share increments") {
    auto [a, b] = coupled_pair(EnsembleSeeding{5}, 3, 0.1);
    for (int i = 0; i < 20; ++i) CHECK(a.next() == b.next());
    auto ref = EnsembleSeeding{5}.stream(3, 0.1);
    auto [c, d] = coupled_pair(EnsembleSeeding{5}, 3, 0.1);
    (void)d;
    CHECK(c.next() == ref.next());
}

TEST_CASE("uniform streams") {
    UniformStream u(8);
    double lo = 1.0, hi = 0.0, sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double v = u.next();
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
    }
    CHECK(lo > 0.0);
    CHECK(hi < 1.0);
    CHECK(std::abs(sum / n - 0.5) < 5.0 * std::sqrt(1.0 / 12.0 / n));
    CHECK(UniformStream(8).at(0) == UniformStream(8).next());
    // Uniform draws never replay the increment stream of the same seed.
    IncrementStream inc(8, 1.0);
    CHECK(normal_quantile(UniformStream(8).at(0)) != inc.next());
}

}  // TEST_SUITE
