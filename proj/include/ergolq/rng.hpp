#pragma once

#include <cmath>
#include <cstdint>

// Counter-based Gaussian noise: one standard normal per
// (seed, path, time slot, channel) key, with no sequential state. Slot
// keying makes the Brownian increments of a path identical wherever its
// simulation window starts, which is what couples the shift-back burn-in
// runs across look-back lengths, and it makes results independent of
// thread scheduling and platform.

namespace ergolq {

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d4a4f644f86c9bULL;
    return z ^ (z >> 31);
}

namespace detail {

inline double to_unit_interval(std::uint64_t bits) {
    // (0, 1), strictly; 2^-53 grid offset keeps log() finite.
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

} // namespace detail

inline double keyed_normal(std::uint64_t seed, std::uint64_t path, std::int64_t slot,
                           std::uint32_t channel) {
    std::uint64_t s = mix64(seed ^ 0x2545f4914f6cdd1dULL);
    s = mix64(s ^ (path * 0xd1342543de82ef95ULL));
    s = mix64(s ^ (static_cast<std::uint64_t>(slot) * 0xaf251af3b0f025b5ULL));
    s = mix64(s ^ (static_cast<std::uint64_t>(channel) * 0x9e3779b97f4a7c15ULL));
    const std::uint64_t b1 = mix64(s);
    const std::uint64_t b2 = mix64(b1 ^ 0x94d049bb133111ebULL);
    const double u1 = detail::to_unit_interval(b1);
    const double u2 = detail::to_unit_interval(b2);
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925286766559 * u2);
}

} // namespace ergolq
