#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "isac/estimators.hpp"
#include "isac/geometry.hpp"
#include "isac/ofdm.hpp"

namespace isac {

/// One target's fused measurement vector. Ranges in meters (d_u is the full
/// bistatic sum of both legs), velocities receding-positive in m/s, angle in
/// degrees from the +x axis.
struct ObservationTuple {
    double d_b = 0.0;
    double v_b = 0.0;
    double theta_b_deg = 0.0;
    double d_u = 0.0;
    double v_u = 0.0;
};

struct StateEstimate {
    Vec2 position;
    Vec2 velocity;
};

using ResidualVector = std::array<double, 5>;  // (m, m/s, deg, m, m/s)
using WeightMatrix = std::array<double, 5>;    // positive diagonal

struct FusedEstimate {
    StateEstimate state;
    ResidualVector final_residual{};
    std::vector<double> objective_trace;  // reweighted objective per outer pass
    int iterations = 0;                   // outer passes run
    bool converged = false;
};

// ---------------------------------------------------------------------------
// unit conversion and target matching
// ---------------------------------------------------------------------------

/// Delay/Doppler estimates to ranges and radial velocities. The bistatic
/// delay converts with the full c0 factor: it measures the sum of both legs.
inline ObservationTuple convert_units(const BsDetection& bs, const UeDetection& ue,
                                      const OfdmConfig& cfg) {
    if (bs.tau < 0.0 || ue.tau < 0.0) throw std::domain_error("convert_units: negative delay");
    ObservationTuple y;
    y.d_b = bs.tau * kSpeedOfLight / 2.0;
    y.v_b = bs.doppler * kSpeedOfLight / (2.0 * cfg.fc);
    y.theta_b_deg = bs.theta_deg;
    y.d_u = ue.tau * kSpeedOfLight;
    y.v_u = ue.doppler * kSpeedOfLight / (2.0 * cfg.fc);
    return y;
}

/// Rough position from the BS range and azimuth alone (the initializer of the
/// joint estimate; also the BS-only fallback).
inline Vec2 initial_position(double d_b, double theta_deg) {
    return {d_b * std::cos(deg2rad(theta_deg)), d_b * std::sin(deg2rad(theta_deg))};
}

struct MatchResult {
    std::vector<std::pair<int, int>> pairs;  // (bs index, ue index)
    std::vector<int> unmatched_bs;
    std::vector<int> unmatched_ue;
};

/// Pair BS detections with UE detections through the expected bistatic delay
/// of each BS-implied rough position. gate_seconds bounds the accepted delay
/// mismatch; entries beyond it stay unmatched.
inline MatchResult match_targets(const BsEstimates& psi_b, const UeEstimates& psi_u,
                                 const Vec2& q_ue, double gate_seconds) {
    MatchResult res;
    const int nb = static_cast<int>(psi_b.size());
    const int nu = static_cast<int>(psi_u.size());
    if (nb == 0 || nu == 0) {
        for (int i = 0; i < nb; ++i) res.unmatched_bs.push_back(i);
        for (int j = 0; j < nu; ++j) res.unmatched_ue.push_back(j);
        return res;
    }
    std::vector<std::vector<double>> cost(nb, std::vector<double>(nu));
    for (int i = 0; i < nb; ++i) {
        Vec2 q0 = initial_position(psi_b[i].tau * kSpeedOfLight / 2.0, psi_b[i].theta_deg);
        double tau_expected = path_delay_bi(q0, q_ue);
        for (int j = 0; j < nu; ++j) cost[i][j] = std::abs(psi_u[j].tau - tau_expected);
    }
    std::vector<int> row_to_col = detail::assign_min_cost(cost);
    std::vector<bool> ue_used(nu, false);
    for (int i = 0; i < nb; ++i) {
        int j = row_to_col[i];
        if (j >= 0 && cost[i][j] <= gate_seconds) {
            res.pairs.emplace_back(i, j);
            ue_used[j] = true;
        } else {
            res.unmatched_bs.push_back(i);
        }
    }
    for (int j = 0; j < nu; ++j)
        if (!ue_used[j]) res.unmatched_ue.push_back(j);
    return res;
}

// ---------------------------------------------------------------------------
// geometric angle correction
// ---------------------------------------------------------------------------

struct AngleCorrection {
    double theta_deg = 0.0;
    bool intersected = false;
};

/// Intersect the BS-centered range circle with the bistatic ellipse and
/// return the intersection azimuth nearest to the measured angle. When the
/// two curves do not intersect the measured angle passes through unchanged.
inline AngleCorrection correct_angle(double d_b, double d_u, double theta_raw_deg,
                                     const Vec2& q_ue, double tol = 1e-3) {
    if (d_b <= 0.0) throw std::domain_error("correct_angle: d_b must be positive");
    double baseline = q_ue.norm();
    if (d_u <= baseline) throw std::domain_error("correct_angle: degenerate ellipse");
    double cos_psi =
        (2.0 * d_b * d_u - d_u * d_u + baseline * baseline) / (2.0 * d_b * baseline);
    if (std::abs(cos_psi) > 1.0 + tol) return {theta_raw_deg, false};
    cos_psi = std::clamp(cos_psi, -1.0, 1.0);
    double psi = rad2deg(std::acos(cos_psi));
    double base_az = aoa_from_bs(q_ue);
    double cand_a = wrap_degrees(base_az - psi);
    double cand_b = wrap_degrees(base_az + psi);
    double da = std::abs(wrap_degrees(cand_a - theta_raw_deg));
    double db = std::abs(wrap_degrees(cand_b - theta_raw_deg));
    return {da <= db ? cand_a : cand_b, true};
}

// ---------------------------------------------------------------------------
// initialization
// ---------------------------------------------------------------------------

struct VelocityInit {
    Vec2 velocity;
    bool degenerate = false;  // target on the BS-UE baseline; radial fallback used
};

/// Solve the 2x2 linear system pinning the radial and bistatic velocity
/// observations at the initial position. Near the baseline the two equations
/// become parallel; the fallback keeps the radial component only.
inline VelocityInit initial_velocity(const Vec2& q0, double v_b, double v_u, const Vec2& q_ue) {
    double r_b = q0.norm();
    double r_u = (q0 - q_ue).norm();
    if (r_b == 0.0 || r_u == 0.0)
        throw std::domain_error("initial_velocity: position at a station");
    Vec2 u_b = q0 * (1.0 / r_b);
    Vec2 u_u = (q0 - q_ue) * (1.0 / r_u);
    Eigen::Matrix2d a;
    a << u_b.x, u_b.y, 0.5 * (u_b.x + u_u.x), 0.5 * (u_b.y + u_u.y);
    Eigen::JacobiSVD<Eigen::Matrix2d> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    double smin = svd.singularValues()(1);
    double smax = svd.singularValues()(0);
    if (smin <= 0.0 || smax / smin > 1e8) return {v_b * u_b, true};
    Eigen::Vector2d rhs(v_b, v_u);
    Eigen::Vector2d v = svd.solve(rhs);
    return {{v(0), v(1)}, false};
}

// ---------------------------------------------------------------------------
// residual model
// ---------------------------------------------------------------------------

/// Residuals of the five observations against the state, in
/// (m, m/s, deg, m, m/s). The angle residual is wrapped to (-180, 180].
/// Evaluated through the same kinematic functions that synthesize truth
/// observations, so a tuple built from the state itself gives exact zeros.
inline ResidualVector residuals(const StateEstimate& state, const ObservationTuple& y,
                                const Vec2& q_ue) {
    const Vec2& q = state.position;
    const Vec2& v = state.velocity;
    if (q.norm() == 0.0 || (q - q_ue).norm() == 0.0)
        throw std::domain_error("residuals: state at a station");
    ResidualVector e;
    e[0] = y.d_b - monostatic_range(q);
    e[1] = y.v_b - radial_velocity_bs(q, v);
    e[2] = wrap_degrees(y.theta_b_deg - aoa_from_bs(q));
    e[3] = y.d_u - bistatic_range_sum(q, q_ue);
    e[4] = y.v_u - bistatic_velocity(q, v, q_ue);
    return e;
}

/// Analytic 5x4 Jacobian of the residuals w.r.t. (x, y, vx, vy). The angle
/// row is in degrees per meter.
inline Eigen::Matrix<double, 5, 4> jacobian(const StateEstimate& state, const ObservationTuple& y,
                                            const Vec2& q_ue) {
    (void)y;  // residual derivatives do not depend on the observed values
    const Vec2& q = state.position;
    const Vec2& v = state.velocity;
    double r_b = q.norm();
    double r_u = (q - q_ue).norm();
    if (r_b == 0.0 || r_u == 0.0) throw std::domain_error("jacobian: state at a station");
    Vec2 u_b = q * (1.0 / r_b);
    Vec2 u_u = (q - q_ue) * (1.0 / r_u);
    double vb = v.dot(u_b), vu = v.dot(u_u);

    Eigen::Matrix<double, 5, 4> j = Eigen::Matrix<double, 5, 4>::Zero();
    j(0, 0) = -u_b.x;
    j(0, 1) = -u_b.y;

    j(1, 0) = -(v.x - vb * u_b.x) / r_b;
    j(1, 1) = -(v.y - vb * u_b.y) / r_b;
    j(1, 2) = -u_b.x;
    j(1, 3) = -u_b.y;

    double deg = 180.0 / kPi;
    j(2, 0) = deg * q.y / (r_b * r_b);
    j(2, 1) = -deg * q.x / (r_b * r_b);

    j(3, 0) = -(u_b.x + u_u.x);
    j(3, 1) = -(u_b.y + u_u.y);

    j(4, 0) = -0.5 * ((v.x - vb * u_b.x) / r_b + (v.x - vu * u_u.x) / r_u);
    j(4, 1) = -0.5 * ((v.y - vb * u_b.y) / r_b + (v.y - vu * u_u.y) / r_u);
    j(4, 2) = -0.5 * (u_b.x + u_u.x);
    j(4, 3) = -0.5 * (u_b.y + u_u.y);
    return j;
}

// ---------------------------------------------------------------------------
// IRLS solver
// ---------------------------------------------------------------------------

struct IrlsOptions {
    double epsilon = 1e-6;     // outer-loop objective-change tolerance
    int max_outer = 50;
    int max_inner = 100;
    double lambda0 = 1e-3;
    double lambda_max = 1e12;
    double weight_floor = 1e-6;  // delta in W = 1 / (|e| + delta)
};

namespace detail {

/// Reweighted objective 0.5 sum e^2 / (|e| + delta); the comparison metric
/// for best-seen tracking and the outer-loop trace.
inline double reweighted_objective(const ResidualVector& e, double delta) {
    double f = 0.0;
    for (double ei : e) f += ei * ei / (std::abs(ei) + delta);
    return 0.5 * f;
}

}  // namespace detail

/// Iteratively reweighted least squares over the five-residual observation
/// model. Inner loop: damped Gauss-Newton with a fixed diagonal weight
/// matrix; outer loop: W <- 1 / (|e| + delta) until the reweighted objective
/// stalls. Returns the best state seen under the reweighted objective, so the
/// result is never worse than the initialization.
inline FusedEstimate irls_fuse(const ObservationTuple& y, const Vec2& q_ue,
                               const StateEstimate& init, const IrlsOptions& opts = {}) {
    const double delta = opts.weight_floor;
    StateEstimate x = init;
    WeightMatrix w;
    w.fill(1.0);

    FusedEstimate result;
    StateEstimate best_x = init;
    double best_score = detail::reweighted_objective(residuals(init, y, q_ue), delta);
    double f_prev = std::numeric_limits<double>::quiet_NaN();
    bool failed = false;
    int outer = 0;

    auto weighted_f = [&](const ResidualVector& e) {
        double f = 0.0;
        for (int i = 0; i < 5; ++i) f += w[i] * e[i] * e[i];
        return 0.5 * f;
    };
    auto to_vec = [](const StateEstimate& s) {
        return Eigen::Vector4d(s.position.x, s.position.y, s.velocity.x, s.velocity.y);
    };
    auto from_vec = [](const Eigen::Vector4d& v) {
        return StateEstimate{{v(0), v(1)}, {v(2), v(3)}};
    };

    for (outer = 1; outer <= opts.max_outer; ++outer) {
        // inner: damped Gauss-Newton under the current W
        double lambda = opts.lambda0;
        for (int it = 0; it < opts.max_inner; ++it) {
            ResidualVector e = residuals(x, y, q_ue);
            double f = weighted_f(e);
            Eigen::Matrix<double, 5, 4> jac_m = jacobian(x, y, q_ue);
            Eigen::Vector4d g = Eigen::Vector4d::Zero();
            Eigen::Matrix4d h = Eigen::Matrix4d::Zero();
            for (int r = 0; r < 5; ++r) {
                g += w[r] * e[r] * jac_m.row(r).transpose();
                h += w[r] * jac_m.row(r).transpose() * jac_m.row(r);
            }
            Eigen::Vector4d step =
                (h + lambda * Eigen::Matrix4d::Identity()).ldlt().solve(-g);
            double xnorm = to_vec(x).norm();
            if (step.norm() <= 1e-13 * (1.0 + xnorm)) break;
            StateEstimate xt = from_vec(to_vec(x) + step);
            double ft = std::numeric_limits<double>::infinity();
            bool ok = true;
            try {
                ft = weighted_f(residuals(xt, y, q_ue));
            } catch (const std::domain_error&) {
                ok = false;
            }
            if (ok && std::isfinite(ft) && ft < f) {
                x = xt;
                lambda = std::max(lambda / 10.0, 1e-12);
                if (f - ft <= 1e-12 * (1.0 + f)) break;
            } else {
                lambda *= 10.0;
                if (lambda > opts.lambda_max) {
                    failed = true;
                    break;
                }
            }
        }

        ResidualVector e = residuals(x, y, q_ue);
        for (int i = 0; i < 5; ++i) w[i] = 1.0 / (std::abs(e[i]) + delta);
        double f_now = detail::reweighted_objective(e, delta);
        result.objective_trace.push_back(f_now);
        if (f_now < best_score) {
            best_score = f_now;
            best_x = x;
        }
        if (!std::isnan(f_prev) && std::abs(f_now - f_prev) <= opts.epsilon) {
            result.converged = true;
            break;
        }
        if (failed) break;
        f_prev = f_now;
    }

    result.state = best_x;
    result.final_residual = residuals(best_x, y, q_ue);
    result.iterations = std::min(outer, opts.max_outer);
    if (failed) result.converged = false;
    return result;
}

// ---------------------------------------------------------------------------
// per-target composition
// ---------------------------------------------------------------------------

struct FusionOptions {
    IrlsOptions irls;
    double gate_bins = 5.0;  // matching gate in monostatic range bins
};

/// Fused output for one BS detection. bs_only marks targets with no matched
/// UE observation: their state is the rough BS position with the radial
/// velocity only.
struct TargetFusion {
    int bs_index = -1;
    int ue_index = -1;
    bool bs_only = false;
    ObservationTuple tuple;     // internal sign convention; theta as measured
    double theta_corrected = 0.0;
    bool intersected = false;
    StateEstimate init;
    FusedEstimate fused;
};

/// Whole-frame fusion: convert units, match, correct angles for the
/// initialization, then run the IRLS per matched target. The measured angle
/// stays in the observation vector; the geometric correction only seeds the
/// initial state.
inline std::vector<TargetFusion> fuse_all(const BsEstimates& psi_b, const UeEstimates& psi_u,
                                          const Vec2& q_ue, const OfdmConfig& cfg,
                                          const FusionOptions& opts = {}) {
    Resolutions res = resolutions(cfg);
    double gate_seconds = opts.gate_bins * res.range_bin_m / kSpeedOfLight;
    MatchResult match = match_targets(psi_b, psi_u, q_ue, gate_seconds);

    std::vector<TargetFusion> out;
    for (auto [bi, ui] : match.pairs) {
        TargetFusion t;
        t.bs_index = bi;
        t.ue_index = ui;
        t.tuple = convert_units(psi_b[bi], psi_u[ui], cfg);
        // quantization can push the measured sum under the baseline; the
        // ellipse degenerates and the measured angle passes through
        AngleCorrection corr{t.tuple.theta_b_deg, false};
        if (t.tuple.d_u > q_ue.norm() && t.tuple.d_b > 0.0)
            corr = correct_angle(t.tuple.d_b, t.tuple.d_u, t.tuple.theta_b_deg, q_ue);
        t.theta_corrected = corr.theta_deg;
        t.intersected = corr.intersected;
        Vec2 q0 = initial_position(t.tuple.d_b, corr.theta_deg);
        VelocityInit vi = initial_velocity(q0, t.tuple.v_b, t.tuple.v_u, q_ue);
        t.init = {q0, vi.velocity};
        t.fused = irls_fuse(t.tuple, q_ue, t.init, opts.irls);
        out.push_back(std::move(t));
    }
    for (int bi : match.unmatched_bs) {
        TargetFusion t;
        t.bs_index = bi;
        t.bs_only = true;
        t.tuple.d_b = psi_b[bi].tau * kSpeedOfLight / 2.0;
        t.tuple.v_b = psi_b[bi].doppler * kSpeedOfLight / (2.0 * cfg.fc);
        t.tuple.theta_b_deg = psi_b[bi].theta_deg;
        t.theta_corrected = psi_b[bi].theta_deg;
        Vec2 q0 = initial_position(t.tuple.d_b, t.tuple.theta_b_deg);
        Vec2 u_b = q0.norm() > 0.0 ? q0 * (1.0 / q0.norm()) : Vec2{1.0, 0.0};
        t.init = {q0, t.tuple.v_b * u_b};
        t.fused.state = t.init;
        t.fused.converged = false;
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace isac
