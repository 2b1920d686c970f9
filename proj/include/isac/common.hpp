#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>

namespace isac {

using cxd = std::complex<double>;

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr double kPi = std::numbers::pi;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Wrap an angle into (-180, 180] degrees.
inline double wrap_degrees(double a) {
    a = std::fmod(a, 360.0);
    if (a <= -180.0) a += 360.0;
    else if (a > 180.0) a -= 360.0;
    return a;
}

/// Derive an independent sub-stream seed from a base seed and a salt
/// (splitmix64 finalizer). Used so that frame data, path phases and noise
/// draws have isolated, reproducible streams.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace isac
