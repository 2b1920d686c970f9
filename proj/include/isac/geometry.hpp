#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "isac/common.hpp"

namespace isac {

/// Planar vector, meters (or m/s when used as a velocity).
struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    constexpr Vec2() = default;
    constexpr Vec2(double xx, double yy) : x(xx), y(yy) {}

    constexpr Vec2 operator+(const Vec2& r) const { return {x + r.x, y + r.y}; }
    constexpr Vec2 operator-(const Vec2& r) const { return {x - r.x, y - r.y}; }
    constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
    friend constexpr Vec2 operator*(double s, const Vec2& v) { return {v.x * s, v.y * s}; }

    constexpr double dot(const Vec2& r) const { return x * r.x + y * r.y; }
    double norm() const { return std::hypot(x, y); }

    Vec2 normalized() const {
        double n = norm();
        if (n <= 0.0) throw std::domain_error("cannot normalize zero-length vector");
        return {x / n, y / n};
    }
};

struct TargetTruth {
    Vec2 position;   // m
    Vec2 velocity;   // m/s
    double rcs = 1.0;  // m^2
};

struct ScattererTruth {
    Vec2 position;                    // m
    double scatter_coefficient = 1.0; // dimensionless magnitude
};

/// Ground-truth world. The base station sits at the origin by convention;
/// every geometric helper below measures from it.
struct Scenario {
    Vec2 ue_position;
    std::vector<TargetTruth> targets;
    std::vector<ScattererTruth> scatterers;
    std::uint64_t seed = 1;
};

// ---------------------------------------------------------------------------
// Kinematic relations between the BS (origin), the UE and a point target.
// Angles are azimuths from the +x axis, velocities are receding-positive.
// ---------------------------------------------------------------------------

/// Azimuth of q seen from the BS, degrees in (-180, 180].
inline double aoa_from_bs(const Vec2& q) {
    if (q.x == 0.0 && q.y == 0.0) throw std::domain_error("aoa undefined at the BS position");
    return rad2deg(std::atan2(q.y, q.x));
}

inline double monostatic_range(const Vec2& q) { return q.norm(); }

/// Sum of both legs of the BS -> target -> UE path.
inline double bistatic_range_sum(const Vec2& q, const Vec2& q_ue) {
    return q.norm() + (q - q_ue).norm();
}

/// Radial velocity relative to the BS; positive when receding.
inline double radial_velocity_bs(const Vec2& q, const Vec2& v) {
    double r = q.norm();
    if (r == 0.0) throw std::domain_error("radial velocity undefined at the BS position");
    return v.dot(q) / r;
}

/// Bistatic velocity: the mean of the projections of v on the unit vectors
/// away from BS and away from UE. Equals ||v|| cos(delta) cos(beta/2) up to
/// sign, with beta the bistatic angle and delta the angle to the bisector.
inline double bistatic_velocity(const Vec2& q, const Vec2& v, const Vec2& q_ue) {
    double r_bs = q.norm();
    double r_ue = (q - q_ue).norm();
    if (r_bs == 0.0 || r_ue == 0.0)
        throw std::domain_error("bistatic velocity undefined at a station position");
    Vec2 u_bs = q * (1.0 / r_bs);
    Vec2 u_ue = (q - q_ue) * (1.0 / r_ue);
    return 0.5 * (v.dot(u_bs) + v.dot(u_ue));
}

inline double path_delay_mono(const Vec2& q) { return 2.0 * q.norm() / kSpeedOfLight; }

inline double path_delay_bi(const Vec2& q, const Vec2& q_ue) {
    return bistatic_range_sum(q, q_ue) / kSpeedOfLight;
}

/// Monostatic Doppler shift; paired with the inverse v = f c0 / (2 fc).
inline double doppler_mono(const Vec2& q, const Vec2& v, double fc) {
    return 2.0 * fc / kSpeedOfLight * radial_velocity_bs(q, v);
}

/// Bistatic Doppler shift with the same inverse conversion as doppler_mono.
inline double doppler_bi(const Vec2& q, const Vec2& v, const Vec2& q_ue, double fc) {
    return 2.0 * fc / kSpeedOfLight * bistatic_velocity(q, v, q_ue);
}

/// Structural checks on a scenario. t_cp_seconds is the cyclic prefix length;
/// every target's bistatic delay must fit inside it for the frequency-domain
/// channel model to hold.
inline void validate_scenario(const Scenario& scen, double t_cp_seconds) {
    for (std::size_t i = 0; i < scen.targets.size(); ++i) {
        const auto& t = scen.targets[i];
        if (!(t.rcs > 0.0))
            throw std::invalid_argument("target " + std::to_string(i) + ": rcs must be > 0");
        if (t.position.x == 0.0 && t.position.y == 0.0)
            throw std::invalid_argument("target " + std::to_string(i) + ": coincides with the BS");
        if ((t.position - scen.ue_position).norm() == 0.0)
            throw std::invalid_argument("target " + std::to_string(i) + ": coincides with the UE");
        double tau_u = path_delay_bi(t.position, scen.ue_position);
        if (tau_u > t_cp_seconds)
            throw std::invalid_argument("target " + std::to_string(i) +
                                        ": bistatic delay exceeds the cyclic prefix");
    }
    for (std::size_t i = 0; i < scen.scatterers.size(); ++i) {
        if (!(scen.scatterers[i].scatter_coefficient > 0.0))
            throw std::invalid_argument("scatterer " + std::to_string(i) +
                                        ": coefficient must be > 0");
    }
}

}  // namespace isac
