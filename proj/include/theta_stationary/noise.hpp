#pragma once

// Reproducible Brownian increments.
//
// Generator: Philox4x32-10 (Salmon et al., Random123 round constants), keyed
// by the 64-bit stream seed (low word first). Increment i uses counter block
// i/2 = (lo32, hi32, 0, 0); lane i%2 takes output words (w0,w1) or (w2,w3).
// The 52-bit integer k = ((w_hi << 32 | w_lo) >> 12) maps to the open
// uniform u = (k + 0.5) * 2^-52 (exact, so 0 < u < 1), then z = Phi^{-1}(u) by Acklam's rational
// approximation (|relative error| < 1.15e-9, no libm refinement), and the
// increment is sqrt(h) * z.
//
// Uniform streams used for point sampling set counter word 2 to 1 so they
// never coincide with increment blocks of the same seed.

#include <array>
#include <cstdint>
#include <utility>

namespace theta_stationary::noise {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter counter, PhiloxKey key) noexcept;

/// Acklam's inverse standard normal CDF; p must lie in (0, 1).
double normal_quantile(double p) noexcept;

/// SplitMix64 output function.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Maps two 32-bit words to a uniform in the open interval (0, 1).
double to_open_unit(std::uint32_t hi, std::uint32_t lo) noexcept;

/// Scalar Brownian increments dB_i ~ N(0, h), addressed by index.
/// The state (seed, h, index) fully determines the next value.
class IncrementStream {
public:
    IncrementStream(std::uint64_t seed, double h);

    double next();
    /// Increment number `index` without moving the cursor.
    double at(std::uint64_t index) const;
    /// Standard normal behind increment `index`.
    double standard_normal_at(std::uint64_t index) const;
    void seek(std::uint64_t index) noexcept { index_ = index; }

    std::uint64_t seed() const noexcept { return seed_; }
    double h() const noexcept { return h_; }
    std::uint64_t index() const noexcept { return index_; }

private:
    std::uint64_t seed_;
    double h_;
    double sqrt_h_;
    std::uint64_t index_ = 0;
    // Last generated Philox block, reused by the paired lane.
    std::uint64_t cached_block_ = ~std::uint64_t{0};
    PhiloxCounter cached_words_{};
};

/// Uniform variates on (0, 1) addressed by index, for sampling test points.
class UniformStream {
public:
    explicit UniformStream(std::uint64_t seed) : seed_(seed) {}
    double next();
    double at(std::uint64_t index) const;

private:
    std::uint64_t seed_;
    std::uint64_t index_ = 0;
};

/// Per-path seeds: path_seed(i) = mix64(base_seed + 0x9E3779B97F4A7C15 * (i + 1)).
struct EnsembleSeeding {
    std::uint64_t base_seed = 0;

    std::uint64_t path_seed(std::uint64_t path) const noexcept {
        return mix64(base_seed + 0x9E3779B97F4A7C15ULL * (path + 1));
    }
    IncrementStream stream(std::uint64_t path, double h) const { return {path_seed(path), h}; }
};

/// Two independent cursors over one increment sequence (common random numbers).
std::pair<IncrementStream, IncrementStream> coupled_pair(const EnsembleSeeding& base, std::uint64_t path,
                                                         double h);

}  // namespace theta_stationary::noise
