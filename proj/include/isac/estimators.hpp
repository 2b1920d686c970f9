#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "isac/channel.hpp"
#include "isac/fft.hpp"
#include "isac/ofdm.hpp"
#include "isac/tensor.hpp"

namespace isac {

using SensingCube = CxCube;  // M_R x N x M after data removal
using SensingGrid = CxMat;   // N x M after data removal

struct BsDetection {
    double tau = 0.0;        // s
    double doppler = 0.0;    // Hz, signed
    double theta_deg = 0.0;  // azimuth, |theta| <= 90
};
using BsEstimates = std::vector<BsDetection>;

struct UeDetection {
    double tau = 0.0;      // s
    double doppler = 0.0;  // Hz, signed
};
using UeEstimates = std::vector<UeDetection>;

struct SenseOptions {
    double music_grid_deg = 0.1;
    double peak_threshold_db = 15.0;  // over the median map level
    int min_separation_bins = 3;      // Chebyshev guard zone between peaks
};

// ---------------------------------------------------------------------------
// data removal and clutter filtering
// ---------------------------------------------------------------------------

/// Divide out the known data symbols on active subcarriers; guards are zeroed.
/// Applying this twice is a misuse: the data is only present once.
inline SensingCube remove_data(const CxCube& rx, const TxFrame& frame, const OfdmConfig& cfg) {
    SensingCube out = rx;
    for (int i = 0; i < out.slices; ++i)
        for (int k = 0; k < out.rows; ++k) {
            cxd* row = out.slice_ptr(i) + static_cast<std::size_t>(k) * out.cols;
            if (!cfg.is_active(k)) {
                std::fill(row, row + out.cols, cxd{0.0, 0.0});
                continue;
            }
            for (int m = 0; m < out.cols; ++m) row[m] /= frame.data(k, m);
        }
    return out;
}

inline SensingGrid remove_data(const CxMat& rx, const TxFrame& frame, const OfdmConfig& cfg) {
    SensingGrid out = rx;
    for (int k = 0; k < out.rows; ++k)
        for (int m = 0; m < out.cols; ++m)
            out(k, m) = cfg.is_active(k) ? out(k, m) / frame.data(k, m) : cxd{0.0, 0.0};
    return out;
}

/// Zero-Doppler notch: subtract the per-subcarrier mean over the symbol axis.
/// Static clutter is removed exactly; a target at exactly zero Doppler is
/// removed with it (documented limitation). Idempotent.
inline void clutter_filter(SensingCube& cube) {
    if (cube.cols < 2) throw std::invalid_argument("clutter_filter needs at least 2 symbols");
    for (int i = 0; i < cube.slices; ++i)
        for (int k = 0; k < cube.rows; ++k) {
            cxd* row = cube.slice_ptr(i) + static_cast<std::size_t>(k) * cube.cols;
            cxd mean = 0.0;
            for (int m = 0; m < cube.cols; ++m) mean += row[m];
            mean /= static_cast<double>(cube.cols);
            for (int m = 0; m < cube.cols; ++m) row[m] -= mean;
        }
}

inline void clutter_filter(SensingGrid& grid) {
    if (grid.cols < 2) throw std::invalid_argument("clutter_filter needs at least 2 symbols");
    for (int k = 0; k < grid.rows; ++k) {
        cxd mean = 0.0;
        for (int m = 0; m < grid.cols; ++m) mean += grid(k, m);
        mean /= static_cast<double>(grid.cols);
        for (int m = 0; m < grid.cols; ++m) grid(k, m) -= mean;
    }
}

// ---------------------------------------------------------------------------
// angle estimation
// ---------------------------------------------------------------------------

/// Sample spatial covariance over all (subcarrier, symbol) snapshots,
/// normalized by the active snapshot count.
inline Eigen::MatrixXcd spatial_covariance(const SensingCube& cube, const OfdmConfig& cfg) {
    using RowMat = Eigen::Matrix<cxd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    if (cube.data.empty()) throw std::invalid_argument("spatial_covariance: empty cube");
    Eigen::Map<const RowMat> x(cube.data.data(), cube.slices,
                               static_cast<Eigen::Index>(cube.rows) * cube.cols);
    double count = static_cast<double>(cfg.n_active()) * cube.cols;
    return (x * x.adjoint()) / count;
}

/// Minimum-description-length source count from descending eigenvalues.
inline int mdl_order(const std::vector<double>& eigs_desc, double n_snapshots) {
    const int m = static_cast<int>(eigs_desc.size());
    if (m < 2) throw std::invalid_argument("mdl_order needs at least 2 eigenvalues");
    // floor at 100 dB below the leading eigenvalue: numerical dust from a
    // noiseless covariance spans decades and would masquerade as structure
    double floor_val = std::max(eigs_desc[0], 0.0) * 1e-10 + 1e-300;
    int best_k = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < m; ++k) {
        int tail = m - k;
        double am = 0.0, lg = 0.0;
        for (int i = k; i < m; ++i) {
            double lam = std::max(eigs_desc[i], floor_val);
            am += lam;
            lg += std::log(lam);
        }
        am /= tail;
        double log_ratio = lg / tail - std::log(am);  // log(GM/AM) <= 0
        double crit = -n_snapshots * tail * log_ratio +
                      0.5 * k * (2.0 * m - k) * std::log(n_snapshots);
        if (crit < best) {
            best = crit;
            best_k = k;
        }
    }
    return best_k;
}

/// MUSIC pseudo-spectrum scan over [-90, 90] degrees; returns up to n_sources
/// local maxima ordered by descending peak height.
inline std::vector<double> music_angles(const Eigen::MatrixXcd& cov, int n_sources,
                                        double grid_step_deg, double spacing,
                                        double wavelength) {
    const int mr = static_cast<int>(cov.rows());
    if (n_sources <= 0) return {};
    if (n_sources >= mr) throw std::invalid_argument("music_angles: need a noise subspace");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(cov);
    if (es.info() != Eigen::Success) throw std::runtime_error("music_angles: eigensolver failed");
    // eigenvalues ascending: the first mr - n_sources columns span the noise subspace
    Eigen::MatrixXcd noise = es.eigenvectors().leftCols(mr - n_sources);

    std::vector<double> grid, power;
    for (double th = -90.0; th <= 90.0 + 1e-12; th += grid_step_deg) grid.push_back(th);
    power.reserve(grid.size());
    Eigen::VectorXcd a(mr);
    for (double th : grid) {
        auto sv = steering(th, mr, spacing, wavelength);
        for (int i = 0; i < mr; ++i) a(i) = sv[i];
        double denom = (noise.adjoint() * a).squaredNorm();
        power.push_back(1.0 / std::max(denom, 1e-300));
    }

    struct Peak {
        double theta, p;
    };
    std::vector<Peak> peaks;
    const int g = static_cast<int>(grid.size());
    for (int i = 0; i < g; ++i) {
        double left = (i > 0) ? power[i - 1] : -1.0;
        double right = (i + 1 < g) ? power[i + 1] : -1.0;
        if (power[i] > left && power[i] >= right) peaks.push_back({grid[i], power[i]});
    }
    std::sort(peaks.begin(), peaks.end(), [](const Peak& a_, const Peak& b_) { return a_.p > b_.p; });
    std::vector<double> out;
    for (int i = 0; i < static_cast<int>(peaks.size()) && i < n_sources; ++i)
        out.push_back(peaks[i].theta);
    return out;
}

/// Receive beamforming towards theta: inner product with the steering vector
/// along the antenna axis. A matched path gains a factor M_R in amplitude.
inline CxMat beamform(const SensingCube& cube, double theta_deg, const OfdmConfig& cfg) {
    auto a = steering(theta_deg, cube.slices, cfg.spacing(), cfg.wavelength());
    CxMat out(cube.rows, cube.cols);
    for (int i = 0; i < cube.slices; ++i) {
        cxd w = std::conj(a[i]);
        const cxd* sl = cube.slice_ptr(i);
        for (std::size_t idx = 0; idx < out.data.size(); ++idx) out.data[idx] += w * sl[idx];
    }
    return out;
}

// ---------------------------------------------------------------------------
// delay-Doppler periodogram
// ---------------------------------------------------------------------------

/// Magnitude of the 2-D periodogram. Rows follow the IFFT delay axis, columns
/// are fft-shifted so that index m maps to the signed Doppler bin
/// m - n_doppler/2. Unnormalized transforms: total energy is the input energy
/// times (n_range * n_doppler_native).
struct RangeDopplerMap {
    int n_range = 0;
    int n_doppler = 0;
    std::vector<double> mag;   // row-major [range][doppler]
    double range_bin_m = 0.0;  // per delay bin
    double velocity_bin_mps = 0.0;  // per signed Doppler bin
    double tau_per_bin = 0.0;       // s
    double doppler_per_bin = 0.0;   // Hz

    double at(int r, int d) const { return mag[static_cast<std::size_t>(r) * n_doppler + d]; }
    int signed_doppler_bin(int idx) const { return idx - n_doppler / 2; }
};

inline RangeDopplerMap range_doppler(const CxMat& f, const OfdmConfig& cfg) {
    if (f.rows != cfg.n_subcarriers || f.cols != cfg.n_symbols)
        throw std::invalid_argument("range_doppler: matrix does not match the numerology");
    const int pad = cfg.zero_pad;
    const int nr = f.rows * pad, nd = f.cols * pad;
    CxMat work(nr, nd);
    for (int k = 0; k < f.rows; ++k)
        for (int m = 0; m < f.cols; ++m) work(k, m) = f(k, m);
    ifft_columns(work);
    fft_rows(work);

    RangeDopplerMap map;
    map.n_range = nr;
    map.n_doppler = nd;
    map.mag.resize(static_cast<std::size_t>(nr) * nd);
    const int half = nd / 2;
    for (int r = 0; r < nr; ++r)
        for (int d = 0; d < nd; ++d)
            map.mag[static_cast<std::size_t>(r) * nd + d] = std::abs(work(r, (d + half) % nd));
    map.tau_per_bin = 1.0 / (static_cast<double>(nr) * cfg.delta_f);
    map.doppler_per_bin = 1.0 / (static_cast<double>(nd) * cfg.symbol_duration());
    map.range_bin_m = map.tau_per_bin * kSpeedOfLight / 2.0;
    map.velocity_bin_mps = map.doppler_per_bin * kSpeedOfLight / (2.0 * cfg.fc);
    return map;
}

namespace detail {

inline double map_median(const RangeDopplerMap& map) {
    std::vector<double> sorted = map.mag;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    return sorted[sorted.size() / 2];
}

/// Exact min-cost assignment (bitmask DP over the smaller side). Rows in
/// excess of columns stay unassigned (-1); which rows win is part of the
/// optimization. Falls back to greedy beyond DP reach.
inline std::vector<int> assign_min_cost(const std::vector<std::vector<double>>& cost) {
    const int nr = static_cast<int>(cost.size());
    const int nc = nr ? static_cast<int>(cost[0].size()) : 0;
    std::vector<int> row_to_col(nr, -1);
    if (nr == 0 || nc == 0) return row_to_col;
    if (nr > nc) {
        std::vector<std::vector<double>> t(nc, std::vector<double>(nr));
        for (int r = 0; r < nr; ++r)
            for (int c = 0; c < nc; ++c) t[c][r] = cost[r][c];
        std::vector<int> col_to_row = assign_min_cost(t);
        for (int c = 0; c < nc; ++c)
            if (col_to_row[c] >= 0) row_to_col[col_to_row[c]] = c;
        return row_to_col;
    }
    if (nc > 12) {
        std::vector<std::tuple<double, int, int>> all;
        for (int r = 0; r < nr; ++r)
            for (int c = 0; c < nc; ++c) all.emplace_back(cost[r][c], r, c);
        std::sort(all.begin(), all.end());
        std::vector<bool> rused(nr, false), cused(nc, false);
        for (auto& [w, r, c] : all)
            if (!rused[r] && !cused[c]) {
                rused[r] = cused[c] = true;
                row_to_col[r] = c;
            }
        return row_to_col;
    }
    const int full = 1 << nc;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dp(full, inf);
    std::vector<int> choice(static_cast<std::size_t>(full) * nr, -1);
    dp[0] = 0.0;
    for (int r = 0; r < nr; ++r) {
        std::vector<double> next(full, inf);
        for (int mask = 0; mask < full; ++mask) {
            if (dp[mask] == inf || __builtin_popcount(mask) != r) continue;
            for (int c = 0; c < nc; ++c) {
                if (mask & (1 << c)) continue;
                int nm = mask | (1 << c);
                double v = dp[mask] + cost[r][c];
                if (v < next[nm]) {
                    next[nm] = v;
                    choice[static_cast<std::size_t>(nm) * nr + r] = c;
                }
            }
        }
        dp.swap(next);
    }
    double best = inf;
    int best_mask = 0;
    for (int mask = 0; mask < full; ++mask)
        if (__builtin_popcount(mask) == nr && dp[mask] < best) {
            best = dp[mask];
            best_mask = mask;
        }
    int mask = best_mask;
    for (int r = nr - 1; r >= 0; --r) {
        int c = choice[static_cast<std::size_t>(mask) * nr + r];
        row_to_col[r] = c;
        mask &= ~(1 << c);
    }
    return row_to_col;
}

}  // namespace detail

struct PeakBin {
    int range_bin = 0;
    int doppler_idx = 0;  // shifted index into the map
    double value = 0.0;
};

/// Greedy peak extraction with a Chebyshev guard zone and a detection
/// threshold at threshold_db above the median map level. May return fewer
/// than max_targets peaks (including none).
inline std::vector<PeakBin> extract_peaks(const RangeDopplerMap& map, int max_targets,
                                          int min_separation_bins = 3,
                                          double threshold_db = 15.0) {
    if (max_targets < 1) throw std::invalid_argument("extract_peaks: max_targets must be >= 1");
    double median = detail::map_median(map);
    double peak_max = 0.0;
    for (double v : map.mag) peak_max = std::max(peak_max, v);
    if (peak_max <= 0.0) return {};
    // an exactly-sparse map (noiseless static scene) has median 0; fall back
    // to a relative dust floor so real peaks still register
    double base = median > 0.0 ? median : peak_max * 1e-9;
    double threshold = base * std::pow(10.0, threshold_db / 20.0);

    std::vector<PeakBin> peaks;
    while (static_cast<int>(peaks.size()) < max_targets) {
        PeakBin best;
        best.value = -1.0;
        for (int r = 0; r < map.n_range; ++r)
            for (int d = 0; d < map.n_doppler; ++d) {
                double v = map.at(r, d);
                if (v <= best.value) continue;
                bool clear = true;
                for (const auto& p : peaks)
                    if (std::max(std::abs(p.range_bin - r), std::abs(p.doppler_idx - d)) <
                        min_separation_bins) {
                        clear = false;
                        break;
                    }
                if (clear) best = {r, d, v};
            }
        if (best.value < threshold) break;
        peaks.push_back(best);
    }
    return peaks;
}

/// Map peak bins to delay / signed Doppler.
inline std::vector<std::pair<double, double>> peaks_to_params(const std::vector<PeakBin>& peaks,
                                                              const RangeDopplerMap& map) {
    std::vector<std::pair<double, double>> out;
    out.reserve(peaks.size());
    for (const auto& p : peaks)
        out.emplace_back(p.range_bin * map.tau_per_bin,
                         map.signed_doppler_bin(p.doppler_idx) * map.doppler_per_bin);
    return out;
}

/// Same mapping from the numerology alone (tau = n / (N df), f = m / (M Ts)
/// with the signed Doppler index).
inline std::vector<std::pair<double, double>> peaks_to_params(const std::vector<PeakBin>& peaks,
                                                              const OfdmConfig& cfg) {
    RangeDopplerMap meta;
    meta.n_range = cfg.n_subcarriers * cfg.zero_pad;
    meta.n_doppler = cfg.n_symbols * cfg.zero_pad;
    meta.tau_per_bin = 1.0 / (static_cast<double>(meta.n_range) * cfg.delta_f);
    meta.doppler_per_bin = 1.0 / (static_cast<double>(meta.n_doppler) * cfg.symbol_duration());
    return peaks_to_params(peaks, meta);
}

// ---------------------------------------------------------------------------
// full sensing chains
// ---------------------------------------------------------------------------

/// BS monostatic chain: data removal, clutter notch, MDL + MUSIC angles,
/// then per-angle beamforming and periodograms. Each beam claims one
/// delay-Doppler bin; when a stronger target leaks into a neighbor's beam,
/// bins are arbitrated by a max-total-power assignment (the matched beam
/// always responds strongest to its own bin, so the true pairing wins).
inline BsEstimates sense_bs(const CxCube& rx, const TxFrame& frame, const OfdmConfig& cfg,
                            const SenseOptions& opts = {}) {
    SensingCube cube = remove_data(rx, frame, cfg);
    clutter_filter(cube);
    Eigen::MatrixXcd cov = spatial_covariance(cube, cfg);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(cov);
    std::vector<double> eigs(es.eigenvalues().data(),
                             es.eigenvalues().data() + es.eigenvalues().size());
    std::reverse(eigs.begin(), eigs.end());
    double n_snapshots = static_cast<double>(cfg.n_active()) * cfg.n_symbols;
    int order = mdl_order(eigs, n_snapshots);
    order = std::min(order, cfg.n_rx - 1);
    if (order == 0) return {};

    auto angles = music_angles(cov, order, opts.music_grid_deg, cfg.spacing(), cfg.wavelength());
    const int nb = static_cast<int>(angles.size());
    if (nb == 0) return {};

    std::vector<RangeDopplerMap> maps;
    maps.reserve(nb);
    std::vector<std::vector<PeakBin>> cands(nb);
    std::vector<double> thresholds(nb);
    for (int b = 0; b < nb; ++b) {
        CxMat f = beamform(cube, angles[b], cfg);
        maps.push_back(range_doppler(f, cfg));
        double median = detail::map_median(maps[b]);
        double peak_max = 0.0;
        for (double v : maps[b].mag) peak_max = std::max(peak_max, v);
        double base = median > 0.0 ? median : peak_max * 1e-9;
        thresholds[b] = base * std::pow(10.0, opts.peak_threshold_db / 20.0);
        cands[b] = extract_peaks(maps[b], order, opts.min_separation_bins,
                                 opts.peak_threshold_db);
    }

    // cluster candidate bins across beams: bins within the guard zone are one
    // physical detection
    std::vector<PeakBin> reps;
    auto same_bin = [&](const PeakBin& a, const PeakBin& b) {
        return std::max(std::abs(a.range_bin - b.range_bin),
                        std::abs(a.doppler_idx - b.doppler_idx)) < opts.min_separation_bins;
    };
    for (int b = 0; b < nb; ++b)
        for (const PeakBin& p : cands[b]) {
            bool found = false;
            for (const PeakBin& r : reps)
                if (same_bin(p, r)) {
                    found = true;
                    break;
                }
            if (!found) reps.push_back(p);
        }
    if (reps.empty()) return {};

    const int nc = static_cast<int>(reps.size());
    const double kUnusable = 1e30;
    std::vector<std::vector<double>> cost(nb, std::vector<double>(nc, kUnusable));
    std::vector<std::vector<PeakBin>> coords(nb, std::vector<PeakBin>(nc));
    for (int b = 0; b < nb; ++b)
        for (int c = 0; c < nc; ++c) {
            PeakBin use = reps[c];
            for (const PeakBin& p : cands[b])
                if (same_bin(p, reps[c])) {
                    use = p;  // this beam's own argmax inside the cluster
                    break;
                }
            double value = maps[b].at(use.range_bin, use.doppler_idx);
            coords[b][c] = use;
            if (value >= thresholds[b]) cost[b][c] = -value;
        }

    std::vector<int> claim = detail::assign_min_cost(cost);
    BsEstimates psi;
    for (int b = 0; b < nb; ++b) {
        int c = claim[b];
        if (c < 0 || cost[b][c] >= kUnusable) continue;  // nothing detectable in this beam
        auto params = peaks_to_params({coords[b][c]}, maps[b]);
        psi.push_back({params[0].first, params[0].second, angles[b]});
    }
    return psi;
}

/// UE bistatic chain: data removal, clutter notch, one periodogram, up to
/// max_targets peaks. The single-antenna UE runs no model-order detection.
inline UeEstimates sense_ue(const CxMat& rx, const TxFrame& frame, const OfdmConfig& cfg,
                            int max_targets, const SenseOptions& opts = {}) {
    SensingGrid grid = remove_data(rx, frame, cfg);
    clutter_filter(grid);
    RangeDopplerMap map = range_doppler(grid, cfg);
    auto peaks = extract_peaks(map, max_targets, opts.min_separation_bins, opts.peak_threshold_db);
    auto params = peaks_to_params(peaks, map);
    UeEstimates psi;
    psi.reserve(params.size());
    for (auto& [tau, fd] : params) psi.push_back({tau, fd});
    return psi;
}

// ---------------------------------------------------------------------------
// map export
// ---------------------------------------------------------------------------

/// CSV dump, one row per range bin.
inline void write_rd_csv(const RangeDopplerMap& map, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    for (int r = 0; r < map.n_range; ++r) {
        for (int d = 0; d < map.n_doppler; ++d) {
            if (d) out << ',';
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.9g", map.at(r, d));
            out << buf;
        }
        out << '\n';
    }
}

/// 8-bit binary PGM of the log-magnitude, normalized to the map maximum with
/// a 60 dB display floor.
inline void write_rd_pgm(const RangeDopplerMap& map, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    double peak = 1e-300;
    for (double v : map.mag) peak = std::max(peak, v);
    out << "P5\n" << map.n_doppler << ' ' << map.n_range << "\n255\n";
    const double floor_db = -60.0;
    for (int r = 0; r < map.n_range; ++r)
        for (int d = 0; d < map.n_doppler; ++d) {
            double db = 20.0 * std::log10(std::max(map.at(r, d), peak * 1e-12) / peak);
            double t = (std::max(db, floor_db) - floor_db) / (-floor_db);
            out.put(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0))));
        }
}

}  // namespace isac
