#pragma once

#include <cmath>
#include <cstdint>

namespace mftg {

// Counter-based random numbers: every draw is a pure function of a
// (seed, stream, counter...) tuple, so path-parallel generation is
// order-independent and bit-reproducible.
namespace rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash(std::uint64_t seed, std::uint64_t a,
                          std::uint64_t b, std::uint64_t c) {
    std::uint64_t h = splitmix64(seed ^ 0x243f6a8885a308d3ULL);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    h = splitmix64(h ^ c);
    return h;
}

// Uniform in (0, 1), strictly excluding 0 so it is log-safe.
inline double to_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

// Standard normal via Box-Muller on two hashed counters.
inline double normal(std::uint64_t seed, std::uint64_t stream,
                     std::uint64_t path, std::uint64_t component) {
    const std::uint64_t h1 = hash(seed, stream, path, 2 * component);
    const std::uint64_t h2 = hash(seed, stream, path, 2 * component + 1);
    const double u1 = to_unit(h1);
    const double u2 = to_unit(h2);
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Uniform in [0, 1).
inline double uniform(std::uint64_t seed, std::uint64_t stream,
                      std::uint64_t path, std::uint64_t component) {
    return static_cast<double>(hash(seed, stream, path, component) >> 11) *
           0x1.0p-53;
}

// Stream ids keep the independent sources of randomness separated.
// Terminal/initial laws get their own streams so y_T stays independent
// of the Brownian increments.
enum Stream : std::uint64_t {
    kBrownianX = 1,
    kBrownianY = 2,
    kTerminalLaw = 3,
    kInitialLawOrdinary = 4,
    kPreferredInitial = 5,
    kSpikeTrials = 6,
};

} // namespace rng
} // namespace mftg
