#pragma once

#include <cmath>
#include <cstdint>

namespace privdfs {

// SplitMix64. All policy material and noise in the project is drawn from
// this generator so that runs reproduce bit-for-bit across platforms.
// Reference: Steele, Lea, Flood (2014) "Fast splittable pseudorandom
// number generators".
struct Rng {
    std::uint64_t state = 0;

    Rng() = default;
    explicit constexpr Rng(std::uint64_t seed) noexcept : state(seed) {}

    constexpr std::uint64_t next() noexcept {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1) with 53 random bits.
    double uniform() noexcept {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // Box-Muller, cosine branch only; the sine partner is discarded so
    // each call consumes exactly two uniforms.
    double gaussian() noexcept {
        double u1 = uniform();
        if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
        const double u2 = uniform();
        constexpr double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }
};

// Domain-separated seed derivation: each (key, stage, branch) triple gets
// an independent stream.
inline std::uint64_t derive_seed(std::uint64_t key, std::uint32_t domain_tag,
                                 std::uint32_t branch) noexcept {
    const std::uint64_t mix =
        (static_cast<std::uint64_t>(domain_tag) << 32) | branch;
    Rng r(key ^ mix ^ 0xD6E8FEB86659FD93ULL);
    r.next();
    return r.next();
}

}  // namespace privdfs
