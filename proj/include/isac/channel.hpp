#pragma once

#include <Eigen/Dense>
#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "isac/geometry.hpp"
#include "isac/ofdm.hpp"
#include "isac/tensor.hpp"

namespace isac {

/// ULA steering vector: element i = exp(-j 2 pi d i sin(theta) / lambda).
inline std::vector<cxd> steering(double theta_deg, int n_elements, double spacing,
                                 double wavelength) {
    if (n_elements < 1) throw std::invalid_argument("steering: need at least one element");
    std::vector<cxd> a(n_elements);
    double phase_step = -2.0 * kPi * spacing * std::sin(deg2rad(theta_deg)) / wavelength;
    for (int i = 0; i < n_elements; ++i) a[i] = std::polar(1.0, phase_step * i);
    return a;
}

enum class PathKind { Monostatic, Bistatic };

struct PathGain {
    cxd amplitude;
};

/// Travel-distance amplitude with a seeded uniform random phase.
/// Targets: |a| = sqrt(rcs) / (r1 r2); scatterers use their coefficient in
/// place of sqrt(rcs). For monostatic paths pass r2 = r1.
inline PathGain path_amplitude(PathKind kind, double r1, double r2, double rcs_or_coeff,
                               std::uint64_t seed) {
    (void)kind;
    if (r1 <= 0.0 || r2 <= 0.0) throw std::domain_error("path_amplitude: zero travel distance");
    double mag = rcs_or_coeff / (r1 * r2);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 2.0 * kPi);
    return {std::polar(mag, uni(rng))};
}

namespace detail {

struct SynthPath {
    double tau;      // s
    double doppler;  // Hz
    double theta;    // deg, azimuth at the BS
    cxd gain;        // effective complex gain including transmit beamforming
};

/// Phase seed derived from the path's own geometry rather than its index in
/// the scene list, so a scene split into sub-scenes synthesizes the same
/// per-path phases (superposition holds exactly with noise off).
inline std::uint64_t path_salt(const Vec2& pos, bool is_target) {
    std::uint64_t hx = std::bit_cast<std::uint64_t>(pos.x);
    std::uint64_t hy = std::bit_cast<std::uint64_t>(pos.y);
    return mix_seed(hx ^ (hy << 1) ^ (hy >> 63), is_target ? 0x7A : 0x5C);
}

/// Transmit array factor towards theta for the frame's weight vector.
inline cxd tx_gain(const OfdmConfig& cfg, const TxFrame& frame, double theta_deg) {
    auto bt = steering(theta_deg, cfg.n_tx, cfg.spacing(), cfg.wavelength());
    cxd g = 0.0;
    for (int i = 0; i < cfg.n_tx; ++i) g += bt[i] * frame.weights[i];
    return g;
}

/// Accumulate sum_p gain_p * br_i(p) * exp(-j2pi k df tau_p) * exp(j2pi f_p Ts m)
/// for all (antenna, subcarrier, symbol) via one matrix product, then apply
/// the data symbols (guards go to zero with them) and add noise on the
/// active resource elements.
inline void accumulate_paths_bs(CxCube& cube, const std::vector<SynthPath>& paths,
                                const OfdmConfig& cfg, const TxFrame& frame,
                                double noise_var, std::uint64_t noise_seed) {
    using Mat = Eigen::Matrix<cxd, Eigen::Dynamic, Eigen::Dynamic>;
    using RowMat = Eigen::Matrix<cxd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    const int n = cfg.n_subcarriers, m = cfg.n_symbols, mr = cfg.n_rx;
    const int p_count = static_cast<int>(paths.size());
    Eigen::Map<RowMat> out(cube.data.data(), static_cast<Eigen::Index>(mr) * n, m);

    if (p_count > 0) {
        Mat u(n, p_count), v(m, p_count), kr(static_cast<Eigen::Index>(mr) * n, p_count);
        double ts = cfg.symbol_duration();
        for (int p = 0; p < p_count; ++p) {
            double dphi_k = -2.0 * kPi * cfg.delta_f * paths[p].tau;
            for (int k = 0; k < n; ++k) u(k, p) = std::polar(1.0, dphi_k * k);
            double dphi_m = 2.0 * kPi * paths[p].doppler * ts;
            for (int mm = 0; mm < m; ++mm) v(mm, p) = std::polar(1.0, dphi_m * mm);
            auto br = steering(paths[p].theta, mr, cfg.spacing(), cfg.wavelength());
            for (int i = 0; i < mr; ++i)
                kr.col(p).segment(static_cast<Eigen::Index>(i) * n, n) =
                    paths[p].gain * br[i] * u.col(p);
        }
        out.noalias() = kr * v.transpose();
    } else {
        out.setZero();
    }

    for (int i = 0; i < mr; ++i)
        for (int k = 0; k < n; ++k) {
            cxd* row = cube.slice_ptr(i) + static_cast<std::size_t>(k) * m;
            for (int mm = 0; mm < m; ++mm) row[mm] *= frame.data(k, mm);
        }

    if (noise_var > 0.0) {
        std::mt19937_64 rng(noise_seed);
        std::normal_distribution<double> gauss(0.0, std::sqrt(noise_var / 2.0));
        for (int i = 0; i < mr; ++i)
            for (int k = cfg.first_active(); k <= cfg.last_active(); ++k) {
                cxd* row = cube.slice_ptr(i) + static_cast<std::size_t>(k) * m;
                for (int mm = 0; mm < m; ++mm) row[mm] += cxd{gauss(rng), gauss(rng)};
            }
    }
}

}  // namespace detail

/// Post-demodulation receive tensor at the BS (antenna x subcarrier x symbol).
/// snr_db is per antenna element per resource element, referenced to the
/// strongest target path (or the strongest path at all when no target is
/// present; a scene with no paths gets unit-variance noise).
inline CxCube synth_bs_cube(const Scenario& scen, const OfdmConfig& cfg, const TxFrame& frame,
                            double snr_db, std::uint64_t seed) {
    cfg.validate();
    double t_cp = cfg.cp_duration();

    std::vector<detail::SynthPath> paths;
    paths.reserve(scen.targets.size() + scen.scatterers.size());
    double strongest_target = 0.0, strongest_any = 0.0;
    std::uint64_t bs_phase_seed = mix_seed(seed, 0xB5);
    for (const auto& t : scen.targets) {
        double r = monostatic_range(t.position);
        double tau = path_delay_mono(t.position);
        if (tau > t_cp) throw std::invalid_argument("target monostatic delay exceeds the CP");
        PathGain a = path_amplitude(PathKind::Monostatic, r, r, std::sqrt(t.rcs),
                                    mix_seed(bs_phase_seed, detail::path_salt(t.position, true)));
        cxd gain = a.amplitude * detail::tx_gain(cfg, frame, aoa_from_bs(t.position));
        paths.push_back({tau, doppler_mono(t.position, t.velocity, cfg.fc),
                         aoa_from_bs(t.position), gain});
        strongest_target = std::max(strongest_target, std::norm(gain));
        strongest_any = std::max(strongest_any, std::norm(gain));
    }
    for (const auto& s : scen.scatterers) {
        double r = monostatic_range(s.position);
        double tau = path_delay_mono(s.position);
        if (tau > t_cp) throw std::invalid_argument("scatterer monostatic delay exceeds the CP");
        PathGain a = path_amplitude(PathKind::Monostatic, r, r, s.scatter_coefficient,
                                    mix_seed(bs_phase_seed, detail::path_salt(s.position, false)));
        cxd gain = a.amplitude * detail::tx_gain(cfg, frame, aoa_from_bs(s.position));
        paths.push_back({tau, 0.0, aoa_from_bs(s.position), gain});
        strongest_any = std::max(strongest_any, std::norm(gain));
    }

    double ref = strongest_target > 0.0 ? strongest_target : strongest_any;
    double noise_var = ref > 0.0 ? ref * std::pow(10.0, -snr_db / 10.0) : 1.0;

    CxCube cube(cfg.n_rx, cfg.n_subcarriers, cfg.n_symbols);
    detail::accumulate_paths_bs(cube, paths, cfg, frame, noise_var, mix_seed(seed, 0x401));
    return cube;
}

/// Post-demodulation receive grid at the single-antenna UE.
inline CxMat synth_ue_grid(const Scenario& scen, const OfdmConfig& cfg, const TxFrame& frame,
                           double snr_db, std::uint64_t seed) {
    cfg.validate();
    using Mat = Eigen::Matrix<cxd, Eigen::Dynamic, Eigen::Dynamic>;
    using RowMat = Eigen::Matrix<cxd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    double t_cp = cfg.cp_duration();

    struct UePath {
        double tau, doppler;
        cxd gain;
    };
    std::vector<UePath> paths;
    paths.reserve(scen.targets.size() + scen.scatterers.size());
    double strongest_target = 0.0, strongest_any = 0.0;
    std::uint64_t ue_phase_seed = mix_seed(seed, 0xC7);
    for (const auto& t : scen.targets) {
        double r1 = monostatic_range(t.position);
        double r2 = (t.position - scen.ue_position).norm();
        double tau = path_delay_bi(t.position, scen.ue_position);
        if (tau > t_cp) throw std::invalid_argument("target bistatic delay exceeds the CP");
        PathGain a = path_amplitude(PathKind::Bistatic, r1, r2, std::sqrt(t.rcs),
                                    mix_seed(ue_phase_seed, detail::path_salt(t.position, true)));
        cxd gain = a.amplitude * detail::tx_gain(cfg, frame, aoa_from_bs(t.position));
        paths.push_back({tau, doppler_bi(t.position, t.velocity, scen.ue_position, cfg.fc), gain});
        strongest_target = std::max(strongest_target, std::norm(gain));
        strongest_any = std::max(strongest_any, std::norm(gain));
    }
    for (const auto& s : scen.scatterers) {
        double r1 = monostatic_range(s.position);
        double r2 = (s.position - scen.ue_position).norm();
        double tau = path_delay_bi(s.position, scen.ue_position);
        if (tau > t_cp) throw std::invalid_argument("scatterer bistatic delay exceeds the CP");
        PathGain a = path_amplitude(PathKind::Bistatic, r1, r2, s.scatter_coefficient,
                                    mix_seed(ue_phase_seed, detail::path_salt(s.position, false)));
        cxd gain = a.amplitude * detail::tx_gain(cfg, frame, aoa_from_bs(s.position));
        paths.push_back({tau, 0.0, gain});
        strongest_any = std::max(strongest_any, std::norm(gain));
    }

    const int n = cfg.n_subcarriers, m = cfg.n_symbols;
    CxMat grid(n, m);
    Eigen::Map<RowMat> out(grid.data.data(), n, m);
    const int p_count = static_cast<int>(paths.size());
    if (p_count > 0) {
        Mat u(n, p_count), v(m, p_count);
        double ts = cfg.symbol_duration();
        for (int p = 0; p < p_count; ++p) {
            double dphi_k = -2.0 * kPi * cfg.delta_f * paths[p].tau;
            for (int k = 0; k < n; ++k) u(k, p) = paths[p].gain * std::polar(1.0, dphi_k * k);
            double dphi_m = 2.0 * kPi * paths[p].doppler * ts;
            for (int mm = 0; mm < m; ++mm) v(mm, p) = std::polar(1.0, dphi_m * mm);
        }
        out.noalias() = u * v.transpose();
    } else {
        out.setZero();
    }

    for (int k = 0; k < n; ++k)
        for (int mm = 0; mm < m; ++mm) grid(k, mm) *= frame.data(k, mm);

    double ref = strongest_target > 0.0 ? strongest_target : strongest_any;
    double noise_var = ref > 0.0 ? ref * std::pow(10.0, -snr_db / 10.0) : 1.0;
    if (noise_var > 0.0) {
        std::mt19937_64 rng(mix_seed(seed, 0x517));
        std::normal_distribution<double> gauss(0.0, std::sqrt(noise_var / 2.0));
        for (int k = cfg.first_active(); k <= cfg.last_active(); ++k)
            for (int mm = 0; mm < m; ++mm) grid(k, mm) += cxd{gauss(rng), gauss(rng)};
    }
    return grid;
}

}  // namespace isac
