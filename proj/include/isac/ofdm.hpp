#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "isac/common.hpp"
#include "isac/tensor.hpp"

namespace isac {

/// Radio numerology for one OFDM sensing frame.
struct OfdmConfig {
    double fc = 24e9;        // carrier, Hz
    double delta_f = 120e3;  // subcarrier spacing, Hz
    int n_subcarriers = 617;   // N
    int n_symbols = 512;       // M
    int n_guard_low = 9;       // null subcarriers at the bottom edge
    int n_guard_high = 8;      // null subcarriers at the top edge
    int n_cp = 149;            // cyclic prefix length in samples at rate N*delta_f
    int n_tx = 16;             // M_T
    int n_rx = 16;             // M_R
    double antenna_spacing = 0.0;  // m; 0 means lambda/2
    int zero_pad = 1;              // integer periodogram zero-pad factor (1 = off)

    double symbol_core() const { return 1.0 / delta_f; }                       // T
    double cp_duration() const { return n_cp / (n_subcarriers * delta_f); }    // T_cp
    double symbol_duration() const { return symbol_core() + cp_duration(); }   // T_s
    double wavelength() const { return kSpeedOfLight / fc; }
    double spacing() const { return antenna_spacing > 0.0 ? antenna_spacing : 0.5 * wavelength(); }
    int first_active() const { return n_guard_low; }
    int last_active() const { return n_subcarriers - n_guard_high - 1; }
    int n_active() const { return n_subcarriers - n_guard_low - n_guard_high; }
    bool is_active(int k) const { return k >= first_active() && k <= last_active(); }

    void validate() const {
        if (n_subcarriers <= n_guard_low + n_guard_high)
            throw std::invalid_argument("no active subcarriers left after guards");
        if (delta_f <= 0 || fc <= 0) throw std::invalid_argument("fc and delta_f must be positive");
        if (n_symbols < 1 || n_tx < 1 || n_rx < 1 || n_cp < 0)
            throw std::invalid_argument("invalid OFDM dimensions");
        if (zero_pad < 1) throw std::invalid_argument("zero_pad must be >= 1");
    }
};

inline OfdmConfig default_config() { return OfdmConfig{}; }

/// One transmit frame: unit-modulus data symbols (guards hold 0) and the
/// transmit beamforming vector. The same unit-norm weight vector is applied
/// on every resource element.
struct TxFrame {
    CxMat data;                // N x M, |d| = 1 on active subcarriers, 0 on guards
    std::vector<cxd> weights;  // length M_T, ||w|| = 1, shared by all (k, m)
};

/// Seeded QPSK frame. Deterministic: the same (cfg, seed) always yields the
/// same frame. Sounding transmits on a single element: the uniform-sum
/// alternative has array-factor nulls (sin theta = k / M_T) that blind whole
/// azimuths, while one element illuminates every angle equally.
inline TxFrame build_frame(const OfdmConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    TxFrame frame;
    frame.data = CxMat(cfg.n_subcarriers, cfg.n_symbols);
    std::mt19937_64 rng(mix_seed(seed, 0x0fda));
    std::uniform_int_distribution<int> bits(0, 3);
    const double s = std::sqrt(0.5);
    static const cxd constellation[4] = {{s, s}, {s, -s}, {-s, s}, {-s, -s}};
    for (int k = 0; k < cfg.n_subcarriers; ++k) {
        for (int m = 0; m < cfg.n_symbols; ++m) {
            frame.data(k, m) = cfg.is_active(k) ? constellation[bits(rng)] : cxd{0.0, 0.0};
        }
    }
    frame.weights.assign(cfg.n_tx, cxd{0.0, 0.0});
    frame.weights[0] = cxd{1.0, 0.0};
    return frame;
}

/// Native estimator resolutions implied by the numerology.
struct Resolutions {
    double range_bin_m;       // c0 / (2 N delta_f)
    double velocity_bin_mps;  // c0 / (2 fc M T_s)
    double angle_grid_deg;    // MUSIC scan step
};

inline Resolutions resolutions(const OfdmConfig& cfg, double angle_grid_deg = 0.1) {
    Resolutions r;
    r.range_bin_m = kSpeedOfLight / (2.0 * cfg.n_subcarriers * cfg.delta_f);
    r.velocity_bin_mps = kSpeedOfLight / (2.0 * cfg.fc * cfg.n_symbols * cfg.symbol_duration());
    r.angle_grid_deg = angle_grid_deg;
    return r;
}

}  // namespace isac
