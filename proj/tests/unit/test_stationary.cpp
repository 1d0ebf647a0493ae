#include <doctest.h>

#include "theta_stationary/empirical.hpp"
#include "theta_stationary/errors.hpp"
#include "theta_stationary/reference.hpp"

#include <cmath>
#include <numbers>
#include <vector>

using namespace theta_stationary;

namespace {

// I_nu(z) by its ascending series.
double bessel_i(double nu, double z) {
    double sum = 0.0;
    for (int m = 0; m < 30; ++m) {
        sum += std::pow(z / 2.0, 2.0 * m + nu) / (std::tgamma(m + 1.0) * std::tgamma(m + nu + 1.0));
    }
    return sum;
}

// integral of exp(-x^2/2 - x^4/4) = (pi/2) e^{1/8} (I_{-1/4}(1/8) - I_{1/4}(1/8))
double quartic_z_bessel() {
    return std::numbers::pi / 2.0 * std::exp(0.125) * (bessel_i(-0.25, 0.125) - bessel_i(0.25, 0.125));
}

constexpr double kQuarticZ = 1.93524781849673;
constexpr double kQuarticSecondMoment = 0.467919916973665;

}  // namespace

TEST_SUITE("stationary") {

TEST_CASE("Kolmogorov survival function") {
    CHECK(kolmogorov_survival(1.0) == doctest::Approx(0.26999967167735456).epsilon(1e-12));
    CHECK(kolmogorov_survival(0.05) == 1.0);
    CHECK(kolmogorov_survival(0.0) == 1.0);
    CHECK(kolmogorov_survival(10.0) < 1e-80);
    double prev = 1.0;
    for (double l = 0.2; l < 3.0; l += 0.1) {
        const double q = kolmogorov_survival(l);
        CHECK(q <= prev);
        CHECK(q >= 0.0);
        prev = q;
    }
}

TEST_CASE("K-S statistic of a tiny sample") {
    const EmpiricalDistribution d({1.0, -1.0, 0.0});
    const auto r = ks_test(d, ReferenceDistribution::normal(0.0, 1.0));
    CHECK(r.statistic == doctest::Approx(0.1746780794018763).epsilon(1e-12));
    CHECK(r.n == 3);
    CHECK(r.p_value == doctest::Approx(kolmogorov_survival(std::sqrt(3.0) * r.statistic)));
}

TEST_CASE("K-S detects a shifted law") {
    const auto sample = quantile_sample(ReferenceDistribution::normal(0.3, 1.0), 5000);
    CHECK(ks_test(sample, ReferenceDistribution::normal(0.0, 1.0)).p_value < 1e-6);
    CHECK(ks_test(sample, ReferenceDistribution::normal(0.3, 1.0)).p_value > 0.99);
}

TEST_CASE("ecdf and empirical moments") {
    const EmpiricalDistribution d({3.0, 1.0, 2.0, 2.0});
    CHECK(d.min() == 1.0);
    CHECK(d.max() == 3.0);
    CHECK(ecdf(d, 0.5) == 0.0);
    CHECK(ecdf(d, 2.0) == 0.75);
    CHECK(ecdf(d, 3.0) == 1.0);
    const auto m = moments(d);
    CHECK(m.mean[0] == doctest::Approx(2.0));
    CHECK(m.second_moment == doctest::Approx(4.5));
    CHECK(m.variance[0] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("empty or non-finite samples are rejected") {
    CHECK_THROWS_AS(EmpiricalDistribution(std::vector<double>{}), EmptySampleError);
    CHECK_THROWS(EmpiricalDistribution({1.0, NAN}));
    CHECK_THROWS_AS(moments(EmpiricalDistribution({1.0})), EmptySampleError);
}

TEST_CASE("Wasserstein-1 in one dimension") {
    const EmpiricalDistribution a({0.0});
    const EmpiricalDistribution b({0.0, 1.0});
    CHECK(wasserstein1_1d(a, b) == doctest::Approx(0.5));
    CHECK(wasserstein1_1d(b, a) == doctest::Approx(0.5));
    CHECK(wasserstein1_1d(b, b) == 0.0);
    const EmpiricalDistribution c({1.0, 2.0, 3.0});
    const EmpiricalDistribution e({4.0, 5.0, 6.0});
    CHECK(wasserstein1_1d(c, e) == doctest::Approx(3.0));
    CHECK(bl_distance_upper(c, e) == 2.0);
    CHECK(bl_distance_upper(a, b) == doctest::Approx(0.5));
}

TEST_CASE("normal reference") {
    const auto n = ReferenceDistribution::normal(1.0, 4.0);
    CHECK(n.cdf(1.0) == doctest::Approx(0.5));
    CHECK(n.cdf(3.0) == doctest::Approx(0.8413447460685429).epsilon(1e-12));
    CHECK(n.density(1.0) == doctest::Approx(1.0 / std::sqrt(8.0 * std::numbers::pi)));
    CHECK(n.mean() == 1.0);
    CHECK(n.variance() == doctest::Approx(4.0));
    CHECK_THROWS(ReferenceDistribution::normal(0.0, 0.0));
}

TEST_CASE("quartic Gibbs normalization against the Bessel closed form") {
    const auto q = quartic_gibbs();
    const double z_bessel = quartic_z_bessel();
    CHECK(z_bessel == doctest::Approx(kQuarticZ).epsilon(1e-12));
    CHECK(q.normalization() == doctest::Approx(z_bessel).epsilon(1e-8));
    CHECK(q.second_moment() == doctest::Approx(kQuarticSecondMoment).epsilon(1e-8));
    CHECK(std::abs(q.mean()) < 1e-12);
    CHECK(q.cdf(0.0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("the I_{1/4} + I_{-1/4} form does not give the quartic normalization") {
    const double alt = std::exp(-0.125) * (bessel_i(0.25, 0.125) + bessel_i(-0.25, 0.125));
    CHECK(alt == doctest::Approx(1.93617).epsilon(1e-5));
    CHECK(std::abs(alt - quartic_gibbs().normalization()) > 4e-4);
}

TEST_CASE("Gibbs CDF and quantile") {
    const auto q = quartic_gibbs();
    double prev = 0.0;
    for (double x = q.lower(); x <= q.upper(); x += 0.05) {
        const double c = q.cdf(x);
        CHECK(c >= prev);
        prev = c;
    }
    CHECK(q.cdf(q.lower() - 1.0) == 0.0);
    CHECK(q.cdf(q.upper() + 1.0) == 1.0);
    for (double p : {1e-6, 0.01, 0.3, 0.5, 0.77, 0.999}) {
        CHECK(q.cdf(q.quantile(p)) == doctest::Approx(p).epsilon(1e-9).scale(1.0));
    }
    // Symmetric potential.
    CHECK(q.cdf(-0.7) == doctest::Approx(1.0 - q.cdf(0.7)).epsilon(1e-10));
    CHECK_THROWS(q.quantile(0.0));
    CHECK_THROWS(q.quantile(1.0));
}

TEST_CASE("Gibbs reference of a Gaussian potential reproduces the normal law") {
    const auto g = ReferenceDistribution::gibbs([](double x) { return 0.5 * x * x; }, -12.0, 12.0);
    CHECK(g.normalization() == doctest::Approx(std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-10));
    CHECK(g.second_moment() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(g.cdf(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-9));
}

TEST_CASE("reference_for follows the descriptor") {
    CHECK(reference_for({StationaryKind::Normal, 0.0, 2.0}).variance() == doctest::Approx(2.0));
    CHECK(reference_for({StationaryKind::QuarticGibbs, 0.0, 0.0}).kind() == ReferenceKind::QuarticGibbs);
}

TEST_CASE("quantile sample") {
    const auto s = quantile_sample(ReferenceDistribution::normal(0.0, 1.0), 4);
    REQUIRE(s.size() == 4);
    CHECK(s.samples()[0] == doctest::Approx(-1.1503493803760079).epsilon(1e-9));
    CHECK(s.samples()[1] == doctest::Approx(-0.31863936396437514).epsilon(1e-9));
    CHECK(s.samples()[2] == doctest::Approx(-s.samples()[1]).epsilon(1e-9));
}

TEST_CASE("1D histogram is normalized over the range") {
    const EmpiricalDistribution d({0.1, 0.2, 0.6, 0.9, 1.5});
    const auto t = histogram_density(d, 2, {0.0, 1.0});
    CHECK(t.counted == 4);
    CHECK(t.dropped == 1);
    CHECK(t.bin_width(0) == 0.5);
    CHECK(t.mass(0) == doctest::Approx(0.5));
    CHECK(t.density[1] == doctest::Approx(1.0));
    CHECK(t.center(0, 1) == 0.75);
    CHECK_THROWS(histogram_density(d, 0, {0.0, 1.0}));
    CHECK_THROWS(histogram_density(d, 2, {1.0, 1.0}));
}

TEST_CASE("2D histogram, bounding box and L1 distance") {
    PointCloud a{2, {0.0, 0.0, 1.0, 1.0}};
    PointCloud b{2, {0.0, 1.0, 1.0, 0.0}};
    const std::vector<PointCloud> clouds = {a, b};
    const auto box = bounding_ranges(clouds);
    REQUIRE(box.size() == 2);
    CHECK(box[0].lower == 0.0);
    CHECK(box[1].upper == 1.0);
    const auto ha = histogram_density(a, 2, box);
    const auto hb = histogram_density(b, 2, box);
    double total = 0.0;
    for (std::size_t i = 0; i < ha.density.size(); ++i) total += ha.mass(i);
    CHECK(total == doctest::Approx(1.0));
    CHECK(ha.counted == 2);
    CHECK(l1_mass_distance(ha, hb) == doctest::Approx(2.0));
    CHECK(l1_mass_distance(ha, ha) == 0.0);
    const auto coarse = histogram_density(a, 1, box);
    CHECK_THROWS(l1_mass_distance(ha, coarse));
}

}  // TEST_SUITE
