#include "theta_stationary/noise.hpp"

#include "theta_stationary/errors.hpp"

#include <cmath>

namespace theta_stationary::noise {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53U;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57U;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9U;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85U;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) noexcept {
    const std::uint64_t product = std::uint64_t{a} * std::uint64_t{b};
    hi = static_cast<std::uint32_t>(product >> 32);
    lo = static_cast<std::uint32_t>(product);
}

PhiloxKey split_seed(std::uint64_t seed) noexcept {
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

PhiloxCounter block_counter(std::uint64_t block, std::uint32_t domain) noexcept {
    return {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32), domain, 0U};
}

}  // namespace

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) noexcept {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kPhiloxW0;
            key[1] += kPhiloxW1;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
        mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

double to_open_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
    const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 12;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
}

double normal_quantile(double p) noexcept {
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    constexpr double p_high = 1.0 - p_low;

    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > p_high) {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

IncrementStream::IncrementStream(std::uint64_t seed, double h) : seed_(seed), h_(h) {
    if (!(h >= 0.0) || !std::isfinite(h)) {
        throw ConstraintViolation("increment stream needs a finite step h >= 0");
    }
    sqrt_h_ = std::sqrt(h);
}

double IncrementStream::standard_normal_at(std::uint64_t index) const {
    const auto words = philox4x32_10(block_counter(index >> 1, 0U), split_seed(seed_));
    const unsigned lane = static_cast<unsigned>(index & 1U) * 2U;
    return normal_quantile(to_open_unit(words[lane], words[lane + 1]));
}

double IncrementStream::at(std::uint64_t index) const { return sqrt_h_ * standard_normal_at(index); }

double IncrementStream::next() {
    const std::uint64_t block = index_ >> 1;
    if (block != cached_block_) {
        cached_words_ = philox4x32_10(block_counter(block, 0U), split_seed(seed_));
        cached_block_ = block;
    }
    const unsigned lane = static_cast<unsigned>(index_ & 1U) * 2U;
    ++index_;
    return sqrt_h_ * normal_quantile(to_open_unit(cached_words_[lane], cached_words_[lane + 1]));
}

double UniformStream::at(std::uint64_t index) const {
    const auto words = philox4x32_10(block_counter(index >> 1, 1U), split_seed(seed_));
    const unsigned lane = static_cast<unsigned>(index & 1U) * 2U;
    return to_open_unit(words[lane], words[lane + 1]);
}

double UniformStream::next() { return at(index_++); }

std::pair<IncrementStream, IncrementStream> coupled_pair(const EnsembleSeeding& base, std::uint64_t path,
                                                         double h) {
    IncrementStream stream = base.stream(path, h);
    return {stream, stream};
}

}  // namespace theta_stationary::noise
