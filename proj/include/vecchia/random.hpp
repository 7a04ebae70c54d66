#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace vecchia {

// SplitMix64 finaliser; used to derive independent stream seeds from a
// (seed, index) pair so that results do not depend on evaluation order.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
    return mix64(mix64(seed) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
    return Rng(stream_seed(seed, stream));
}

// Uniform on the open interval (0,1); 53 random bits, never returns 0 or 1.
inline double uniform_open(Rng& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

inline double standard_normal(Rng& rng) {
    // Marsaglia polar method; avoids the implementation-defined behaviour of
    // std::normal_distribution so outputs are stable across standard libraries.
    for (;;) {
        const double u = 2.0 * uniform_open(rng) - 1.0;
        const double v = 2.0 * uniform_open(rng) - 1.0;
        const double s = u * u + v * v;
        if (s > 0.0 && s < 1.0) {
            return u * std::sqrt(-2.0 * std::log(s) / s);
        }
    }
}

inline double standard_exponential(Rng& rng) {
    return -std::log(uniform_open(rng));
}

} // namespace vecchia
