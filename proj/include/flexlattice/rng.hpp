#pragma once

#include <cmath>
#include <cstdint>

namespace flexlattice {

// Counter-based pseudo-random streams. Every draw is a pure function of
// (seed, stream tag, device index, step), so fleet iteration order and
// parallelism cannot perturb a run. splitmix64 finalizer.
namespace rng {

inline std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t substream(std::uint64_t seed, std::uint64_t tag,
                               std::uint64_t device, std::uint64_t step) {
    return mix(mix(mix(mix(seed) ^ tag) ^ device) ^ step);
}

// uniform in [0, 1)
inline double to_unit(std::uint64_t u) {
    return static_cast<double>(u >> 11) * 0x1.0p-53;
}

inline double uniform(std::uint64_t seed, std::uint64_t tag,
                      std::uint64_t device, std::uint64_t step) {
    return to_unit(substream(seed, tag, device, step));
}

// standard normal via Box-Muller on two derived counters
inline double gaussian(std::uint64_t seed, std::uint64_t tag,
                       std::uint64_t device, std::uint64_t step) {
    const std::uint64_t h = substream(seed, tag, device, step);
    const double u1 = to_unit(mix(h ^ 0x5bf03635ULL));
    const double u2 = to_unit(mix(h ^ 0xc2b2ae35ULL));
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
}

// stream tags used by the engine
constexpr std::uint64_t kTagProcessNoise = 0x70726f63ULL;  // bucket process noise
constexpr std::uint64_t kTagMeasurement = 0x6d656173ULL;   // metering noise
constexpr std::uint64_t kTagDither = 0x64697468ULL;        // activation dither offsets
constexpr std::uint64_t kTagInit = 0x696e6974ULL;          // initial-state draws

}  // namespace rng
}  // namespace flexlattice
