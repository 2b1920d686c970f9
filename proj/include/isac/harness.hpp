#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "isac/channel.hpp"
#include "isac/estimators.hpp"
#include "isac/fusion.hpp"
#include "isac/geometry.hpp"
#include "isac/ofdm.hpp"

namespace isac {

// ---------------------------------------------------------------------------
// run configuration
// ---------------------------------------------------------------------------

struct RandomTargetSpec {
    int count = 3;
    double range_min_m = 40.0;
    double range_max_m = 100.0;
    double azimuth_half_span_deg = 45.0;  // around the array broadside (+x)
    double speed_min_mps = 5.0;
    double speed_max_mps = 25.0;
    double rcs_m2 = 3.5;
};

struct RandomScattererSpec {
    int count = 0;
    double x_min = 0.0, x_max = 120.0;
    double y_min = -60.0, y_max = 60.0;
    double coeff_min = 0.5, coeff_max = 1.5;
};

struct RunConfig {
    OfdmConfig radio;
    std::uint64_t seed = 1;
    Vec2 ue_position{80.8, 59.0};
    std::vector<TargetTruth> targets;  // explicit, used when randomize_targets is off
    bool randomize_targets = false;
    RandomTargetSpec random_targets;
    std::vector<ScattererTruth> scatterers;  // explicit
    RandomScattererSpec random_scatterers;

    double snr_bs_db = 0.0;
    double snr_ue_db = 10.0;
    SenseOptions sense;
    int max_targets_ue = 8;
    FusionOptions fusion;

    int mc_runs = 10;
    std::uint64_t mc_base_seed = 1;

    std::string out_dir = "out";
    bool dump_maps = false;
    bool dump_cubes = false;
};

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& ex) {
        throw std::runtime_error("config parse error in " + path + ": " + ex.what());
    }

    RunConfig rc;
    if (j.contains("radio")) {
        const auto& r = j["radio"];
        rc.radio.fc = r.value("fc_hz", rc.radio.fc);
        rc.radio.delta_f = r.value("delta_f_hz", rc.radio.delta_f);
        rc.radio.n_subcarriers = r.value("n_subcarriers", rc.radio.n_subcarriers);
        rc.radio.n_symbols = r.value("n_symbols", rc.radio.n_symbols);
        rc.radio.n_guard_low = r.value("n_guard_low", rc.radio.n_guard_low);
        rc.radio.n_guard_high = r.value("n_guard_high", rc.radio.n_guard_high);
        rc.radio.n_cp = r.value("n_cp", rc.radio.n_cp);
        rc.radio.n_tx = r.value("n_tx", rc.radio.n_tx);
        rc.radio.n_rx = r.value("n_rx", rc.radio.n_rx);
        rc.radio.antenna_spacing = r.value("antenna_spacing_m", rc.radio.antenna_spacing);
        rc.radio.zero_pad = r.value("zero_pad", rc.radio.zero_pad);
    }
    rc.radio.validate();

    if (j.contains("scenario")) {
        const auto& s = j["scenario"];
        rc.seed = s.value("seed", rc.seed);
        if (s.contains("ue_position")) {
            auto u = s["ue_position"];
            rc.ue_position = {u.at(0).get<double>(), u.at(1).get<double>()};
        }
        if (s.contains("targets")) {
            for (const auto& t : s["targets"]) {
                TargetTruth tt;
                tt.position = {t.at("position").at(0).get<double>(),
                               t.at("position").at(1).get<double>()};
                tt.velocity = {t.at("velocity").at(0).get<double>(),
                               t.at("velocity").at(1).get<double>()};
                tt.rcs = t.value("rcs_m2", 3.5);
                rc.targets.push_back(tt);
            }
        }
        if (s.contains("random_targets")) {
            const auto& r = s["random_targets"];
            rc.randomize_targets = true;
            rc.random_targets.count = r.value("count", rc.random_targets.count);
            rc.random_targets.range_min_m = r.value("range_min_m", rc.random_targets.range_min_m);
            rc.random_targets.range_max_m = r.value("range_max_m", rc.random_targets.range_max_m);
            rc.random_targets.azimuth_half_span_deg =
                r.value("azimuth_half_span_deg", rc.random_targets.azimuth_half_span_deg);
            rc.random_targets.speed_min_mps = r.value("speed_min_mps", rc.random_targets.speed_min_mps);
            rc.random_targets.speed_max_mps = r.value("speed_max_mps", rc.random_targets.speed_max_mps);
            rc.random_targets.rcs_m2 = r.value("rcs_m2", rc.random_targets.rcs_m2);
        }
        if (s.contains("scatterers")) {
            const auto& sc = s["scatterers"];
            if (sc.is_array()) {
                for (const auto& e : sc) {
                    ScattererTruth st;
                    st.position = {e.at("position").at(0).get<double>(),
                                   e.at("position").at(1).get<double>()};
                    st.scatter_coefficient = e.value("coefficient", 1.0);
                    rc.scatterers.push_back(st);
                }
            } else {
                rc.random_scatterers.count = sc.value("count", rc.random_scatterers.count);
                rc.random_scatterers.x_min = sc.value("x_min", rc.random_scatterers.x_min);
                rc.random_scatterers.x_max = sc.value("x_max", rc.random_scatterers.x_max);
                rc.random_scatterers.y_min = sc.value("y_min", rc.random_scatterers.y_min);
                rc.random_scatterers.y_max = sc.value("y_max", rc.random_scatterers.y_max);
                rc.random_scatterers.coeff_min = sc.value("coeff_min", rc.random_scatterers.coeff_min);
                rc.random_scatterers.coeff_max = sc.value("coeff_max", rc.random_scatterers.coeff_max);
            }
        }
    }
    if (j.contains("sensing")) {
        const auto& s = j["sensing"];
        rc.snr_bs_db = s.value("snr_bs_db", rc.snr_bs_db);
        rc.snr_ue_db = s.value("snr_ue_db", rc.snr_ue_db);
        rc.sense.music_grid_deg = s.value("music_grid_deg", rc.sense.music_grid_deg);
        rc.sense.peak_threshold_db = s.value("peak_threshold_db", rc.sense.peak_threshold_db);
        rc.sense.min_separation_bins = s.value("min_separation_bins", rc.sense.min_separation_bins);
        rc.max_targets_ue = s.value("max_targets_ue", rc.max_targets_ue);
    }
    if (j.contains("fusion")) {
        const auto& f = j["fusion"];
        rc.fusion.irls.epsilon = f.value("epsilon", rc.fusion.irls.epsilon);
        rc.fusion.irls.max_outer = f.value("max_outer_iterations", rc.fusion.irls.max_outer);
        rc.fusion.gate_bins = f.value("matching_gate_bins", rc.fusion.gate_bins);
    }
    if (j.contains("montecarlo")) {
        const auto& m = j["montecarlo"];
        rc.mc_runs = m.value("runs", rc.mc_runs);
        rc.mc_base_seed = m.value("base_seed", rc.mc_base_seed);
    }
    if (j.contains("output")) {
        const auto& o = j["output"];
        rc.out_dir = o.value("directory", rc.out_dir);
        rc.dump_maps = o.value("dump_maps", rc.dump_maps);
        rc.dump_cubes = o.value("dump_cubes", rc.dump_cubes);
    }
    if (rc.mc_runs < 1) throw std::invalid_argument("montecarlo.runs must be >= 1");
    return rc;
}

// ---------------------------------------------------------------------------
// scenario construction
// ---------------------------------------------------------------------------

/// Materialize the world for one run. Random target/scatterer draws are
/// functions of the given seed only.
inline Scenario build_scenario(const RunConfig& rc, std::uint64_t seed) {
    Scenario scen;
    scen.seed = seed;
    scen.ue_position = rc.ue_position;
    if (rc.randomize_targets) {
        std::mt19937_64 rng(mix_seed(seed, 0x7A36));
        std::uniform_real_distribution<double> ur(rc.random_targets.range_min_m,
                                                  rc.random_targets.range_max_m);
        std::uniform_real_distribution<double> uaz(-rc.random_targets.azimuth_half_span_deg,
                                                   rc.random_targets.azimuth_half_span_deg);
        std::uniform_real_distribution<double> us(rc.random_targets.speed_min_mps,
                                                  rc.random_targets.speed_max_mps);
        std::uniform_real_distribution<double> uh(0.0, 360.0);
        for (int i = 0; i < rc.random_targets.count; ++i) {
            double r = ur(rng), az = deg2rad(uaz(rng));
            double sp = us(rng), hd = deg2rad(uh(rng));
            TargetTruth t;
            t.position = {r * std::cos(az), r * std::sin(az)};
            t.velocity = {sp * std::cos(hd), sp * std::sin(hd)};
            t.rcs = rc.random_targets.rcs_m2;
            scen.targets.push_back(t);
        }
    } else {
        scen.targets = rc.targets;
    }
    scen.scatterers = rc.scatterers;
    if (rc.random_scatterers.count > 0) {
        std::mt19937_64 rng(mix_seed(seed, 0x5CA7));
        std::uniform_real_distribution<double> ux(rc.random_scatterers.x_min,
                                                  rc.random_scatterers.x_max);
        std::uniform_real_distribution<double> uy(rc.random_scatterers.y_min,
                                                  rc.random_scatterers.y_max);
        std::uniform_real_distribution<double> uc(rc.random_scatterers.coeff_min,
                                                  rc.random_scatterers.coeff_max);
        for (int i = 0; i < rc.random_scatterers.count; ++i) {
            ScattererTruth s;
            s.position = {ux(rng), uy(rng)};
            // keep clutter off the exact BS position
            if (s.position.norm() < 1.0) s.position.x += 2.0;
            s.scatter_coefficient = uc(rng);
            scen.scatterers.push_back(s);
        }
    }
    validate_scenario(scen, rc.radio.cp_duration());
    return scen;
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

struct TargetMetrics {
    int target_id = -1;
    double pos_err_bs = 0.0;     // Eq.(15)-style rough position vs truth
    double pos_err_fused = 0.0;  // IRLS output vs truth
    double vel_err_x = 0.0;      // fused velocity error components
    double vel_err_y = 0.0;
    bool fused_used = false;  // false for BS-only fallbacks
};

struct MetricsReport {
    std::vector<TargetMetrics> per_target;
    double rmse_bs = 0.0;
    double rmse_fused = 0.0;
    bool fused_beats_bs = false;
};

/// Position RMSE of BS-only and fused outputs against truth. The two lists
/// must be aligned index-by-index.
inline MetricsReport compute_rmse(const std::vector<TargetTruth>& truth,
                                  const std::vector<TargetFusion>& fused) {
    if (truth.size() != fused.size())
        throw std::invalid_argument("compute_rmse: length mismatch");
    MetricsReport rep;
    double acc_bs = 0.0, acc_fused = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        Vec2 bs_pos = initial_position(fused[i].tuple.d_b, fused[i].tuple.theta_b_deg);
        TargetMetrics tm;
        tm.target_id = static_cast<int>(i);
        tm.pos_err_bs = (bs_pos - truth[i].position).norm();
        tm.pos_err_fused = (fused[i].fused.state.position - truth[i].position).norm();
        tm.vel_err_x = fused[i].fused.state.velocity.x - truth[i].velocity.x;
        tm.vel_err_y = fused[i].fused.state.velocity.y - truth[i].velocity.y;
        tm.fused_used = !fused[i].bs_only;
        acc_bs += tm.pos_err_bs * tm.pos_err_bs;
        acc_fused += tm.pos_err_fused * tm.pos_err_fused;
        rep.per_target.push_back(tm);
    }
    if (!truth.empty()) {
        rep.rmse_bs = std::sqrt(acc_bs / truth.size());
        rep.rmse_fused = std::sqrt(acc_fused / truth.size());
    }
    rep.fused_beats_bs = rep.rmse_fused < rep.rmse_bs;
    return rep;
}

// ---------------------------------------------------------------------------
// file output helpers
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

/// Write-then-rename so partially written files never appear under the final name.
inline void atomic_write(const std::string& path, const std::string& content) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + tmp);
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace detail

/// Binary tensor dump: 16-byte header of four little-endian uint32
/// (ndims, d0, d1, d2; d2 = 1 for matrices) followed by interleaved
/// float32 re/im pairs in row-major order.
inline void write_cube_bin(const CxCube& cube, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    std::uint32_t hdr[4] = {3u, static_cast<std::uint32_t>(cube.slices),
                            static_cast<std::uint32_t>(cube.rows),
                            static_cast<std::uint32_t>(cube.cols)};
    out.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    for (const cxd& v : cube.data) {
        float re = static_cast<float>(v.real()), im = static_cast<float>(v.imag());
        out.write(reinterpret_cast<const char*>(&re), 4);
        out.write(reinterpret_cast<const char*>(&im), 4);
    }
}

inline void write_grid_bin(const CxMat& grid, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    std::uint32_t hdr[4] = {2u, static_cast<std::uint32_t>(grid.rows),
                            static_cast<std::uint32_t>(grid.cols), 1u};
    out.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    for (const cxd& v : grid.data) {
        float re = static_cast<float>(v.real()), im = static_cast<float>(v.imag());
        out.write(reinterpret_cast<const char*>(&re), 4);
        out.write(reinterpret_cast<const char*>(&im), 4);
    }
}

// ---------------------------------------------------------------------------
// tuples file (fusion-only replay)
// ---------------------------------------------------------------------------

enum class SignConvention { Internal, Paper };

struct TuplesFile {
    std::vector<ObservationTuple> tuples;  // already in the internal convention
    SignConvention declared = SignConvention::Internal;
};

/// One line per target: d_B,v_B,theta_B_deg,d_U,v_U. '#' comments and blank
/// lines are skipped. A "sign_convention: paper|internal" directive controls
/// the sign flip of the fifth entry (papers quote the bistatic velocity with
/// the opposite sign); an explicit override wins over the directive.
inline TuplesFile load_tuples(const std::string& path,
                              const std::string& sign_override = "") {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open tuples file: " + path);
    TuplesFile tf;
    std::vector<std::array<double, 5>> raw;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto first = line.find_first_not_of(" \t\r\n");
        if (first == std::string::npos) continue;
        auto last = line.find_last_not_of(" \t\r\n");
        line = line.substr(first, last - first + 1);
        if (line.rfind("sign_convention:", 0) == 0) {
            std::string v = line.substr(16);
            v.erase(0, v.find_first_not_of(" \t"));
            if (v == "paper") tf.declared = SignConvention::Paper;
            else if (v == "internal") tf.declared = SignConvention::Internal;
            else
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": unknown sign_convention '" + v + "'");
            continue;
        }
        std::array<double, 5> vals{};
        std::stringstream ss(line);
        std::string cell;
        int idx = 0;
        while (std::getline(ss, cell, ',')) {
            if (idx >= 5) break;
            try {
                std::size_t pos = 0;
                vals[idx] = std::stod(cell, &pos);
            } catch (const std::exception&) {
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": malformed number '" + cell + "'");
            }
            ++idx;
        }
        if (idx != 5)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected 5 comma-separated values");
        raw.push_back(vals);
    }
    SignConvention effective = tf.declared;
    if (sign_override == "paper") effective = SignConvention::Paper;
    else if (sign_override == "internal") effective = SignConvention::Internal;
    else if (!sign_override.empty())
        throw std::runtime_error("unknown sign convention override '" + sign_override + "'");
    tf.declared = effective;
    for (auto& v : raw) {
        ObservationTuple y{v[0], v[1], v[2], v[3], v[4]};
        if (effective == SignConvention::Paper) y.v_u = -y.v_u;
        tf.tuples.push_back(y);
    }
    return tf;
}

// ---------------------------------------------------------------------------
// simulation pipeline
// ---------------------------------------------------------------------------

struct SimResult {
    Scenario scenario;
    BsEstimates psi_b;
    UeEstimates psi_u;
    std::vector<TargetFusion> fusion;      // all fused outputs
    std::vector<int> truth_to_fusion;      // per truth target: index into fusion or -1
    MetricsReport metrics;                 // over the matched targets only
    std::vector<int> matched_truth_ids;    // truth indices behind metrics rows
};

/// Full front end + fusion for one seeded scene.
inline SimResult run_simulation(const RunConfig& rc, std::uint64_t seed) {
    SimResult res;
    res.scenario = build_scenario(rc, seed);
    TxFrame frame = build_frame(rc.radio, mix_seed(seed, 1));
    CxCube rx_bs = synth_bs_cube(res.scenario, rc.radio, frame, rc.snr_bs_db, mix_seed(seed, 2));
    CxMat rx_ue = synth_ue_grid(res.scenario, rc.radio, frame, rc.snr_ue_db, mix_seed(seed, 3));
    res.psi_b = sense_bs(rx_bs, frame, rc.radio, rc.sense);
    res.psi_u = sense_ue(rx_ue, frame, rc.radio, rc.max_targets_ue, rc.sense);
    res.fusion = fuse_all(res.psi_b, res.psi_u, res.scenario.ue_position, rc.radio, rc.fusion);

    if (rc.dump_cubes) {
        std::filesystem::create_directories(rc.out_dir);
        write_cube_bin(rx_bs, rc.out_dir + "/bs_cube.bin");
        write_grid_bin(rx_ue, rc.out_dir + "/ue_grid.bin");
    }
    if (rc.dump_maps) {
        std::filesystem::create_directories(rc.out_dir);
        SensingGrid grid = remove_data(rx_ue, frame, rc.radio);
        clutter_filter(grid);
        RangeDopplerMap ue_map = range_doppler(grid, rc.radio);
        write_rd_pgm(ue_map, rc.out_dir + "/ue_rd.pgm");
        write_rd_csv(ue_map, rc.out_dir + "/ue_rd.csv");
        SensingCube cube = remove_data(rx_bs, frame, rc.radio);
        clutter_filter(cube);
        for (std::size_t i = 0; i < res.psi_b.size(); ++i) {
            CxMat f = beamform(cube, res.psi_b[i].theta_deg, rc.radio);
            RangeDopplerMap m = range_doppler(f, rc.radio);
            write_rd_pgm(m, rc.out_dir + "/bs_rd_" + std::to_string(i) + ".pgm");
        }
    }

    // associate fused outputs with truth targets (min total position error)
    const int nt = static_cast<int>(res.scenario.targets.size());
    const int nf = static_cast<int>(res.fusion.size());
    res.truth_to_fusion.assign(nt, -1);
    if (nt > 0 && nf > 0) {
        std::vector<std::vector<double>> cost(nt, std::vector<double>(nf));
        for (int i = 0; i < nt; ++i)
            for (int j = 0; j < nf; ++j)
                cost[i][j] =
                    (res.fusion[j].fused.state.position - res.scenario.targets[i].position).norm();
        res.truth_to_fusion = detail::assign_min_cost(cost);
    }

    std::vector<TargetTruth> matched_truth;
    std::vector<TargetFusion> matched_fusion;
    for (int i = 0; i < nt; ++i) {
        if (res.truth_to_fusion[i] >= 0) {
            matched_truth.push_back(res.scenario.targets[i]);
            matched_fusion.push_back(res.fusion[res.truth_to_fusion[i]]);
            res.matched_truth_ids.push_back(i);
        }
    }
    res.metrics = compute_rmse(matched_truth, matched_fusion);
    return res;
}

inline void write_estimates_csv(const SimResult& res, const std::string& path) {
    std::ostringstream out;
    out << "target_id,x_true,y_true,vx_true,vy_true,x_bs,y_bs,vr_bs,"
           "x_fused,y_fused,vx_fused,vy_fused,iters,converged\n";
    using detail::fmt_g;
    for (std::size_t row = 0; row < res.matched_truth_ids.size(); ++row) {
        int ti = res.matched_truth_ids[row];
        const TargetTruth& t = res.scenario.targets[ti];
        const TargetFusion& f = res.fusion[res.truth_to_fusion[ti]];
        Vec2 bs_pos = initial_position(f.tuple.d_b, f.tuple.theta_b_deg);
        out << ti << ',' << fmt_g(t.position.x) << ',' << fmt_g(t.position.y) << ','
            << fmt_g(t.velocity.x) << ',' << fmt_g(t.velocity.y) << ',' << fmt_g(bs_pos.x) << ','
            << fmt_g(bs_pos.y) << ',' << fmt_g(f.tuple.v_b) << ','
            << fmt_g(f.fused.state.position.x) << ',' << fmt_g(f.fused.state.position.y) << ','
            << fmt_g(f.fused.state.velocity.x) << ',' << fmt_g(f.fused.state.velocity.y) << ','
            << f.fused.iterations << ',' << (f.fused.converged ? 1 : 0) << '\n';
    }
    detail::atomic_write(path, out.str());
}

inline void write_metrics_csv(const MetricsReport& rep, const std::string& path) {
    std::ostringstream out;
    using detail::fmt_g;
    out << "target_id,pos_err_bs_m,pos_err_fused_m,vel_err_x_mps,vel_err_y_mps,fused\n";
    for (const auto& tm : rep.per_target)
        out << tm.target_id << ',' << fmt_g(tm.pos_err_bs) << ',' << fmt_g(tm.pos_err_fused) << ','
            << fmt_g(tm.vel_err_x) << ',' << fmt_g(tm.vel_err_y) << ',' << (tm.fused_used ? 1 : 0)
            << '\n';
    out << "all," << fmt_g(rep.rmse_bs) << ',' << fmt_g(rep.rmse_fused) << ",,,"
        << (rep.fused_beats_bs ? 1 : 0) << '\n';
    detail::atomic_write(path, out.str());
}

// ---------------------------------------------------------------------------
// commands (the CLI maps onto these; exit codes 0 ok / 1 config / 2 runtime)
// ---------------------------------------------------------------------------

inline int cmd_simulate(const std::string& config_path, std::int64_t seed_override = -1,
                        const std::string& out_override = "", bool dump_maps_flag = false) {
    RunConfig rc;
    try {
        rc = load_run_config(config_path);
    } catch (const std::exception& ex) {
        std::cerr << "config error: " << ex.what() << '\n';
        return 1;
    }
    if (seed_override >= 0) rc.seed = static_cast<std::uint64_t>(seed_override);
    if (!out_override.empty()) rc.out_dir = out_override;
    if (dump_maps_flag) rc.dump_maps = true;
    try {
        std::filesystem::create_directories(rc.out_dir);
        SimResult res = run_simulation(rc, rc.seed);
        write_estimates_csv(res, rc.out_dir + "/estimates.csv");
        write_metrics_csv(res.metrics, rc.out_dir + "/metrics.csv");
        std::size_t nt = res.scenario.targets.size();
        if (res.matched_truth_ids.size() < nt)
            std::cerr << "warning: " << (nt - res.matched_truth_ids.size()) << " of " << nt
                      << " targets were not detected; partial results written\n";
        std::cout << "targets=" << nt << " detected_bs=" << res.psi_b.size()
                  << " detected_ue=" << res.psi_u.size()
                  << " rmse_bs=" << detail::fmt_g(res.metrics.rmse_bs)
                  << " rmse_fused=" << detail::fmt_g(res.metrics.rmse_fused) << '\n';
        return 0;
    } catch (const std::invalid_argument& ex) {
        std::cerr << "config error: " << ex.what() << '\n';
        return 1;
    } catch (const std::exception& ex) {
        std::cerr << "runtime error: " << ex.what() << '\n';
        return 2;
    }
}

/// Fusion-only replay of an observation-tuple file.
inline int cmd_fuse(const std::string& tuples_path, const Vec2& ue_position,
                    const std::string& sign_override = "", const std::string& out_dir = ".") {
    TuplesFile tf;
    try {
        tf = load_tuples(tuples_path, sign_override);
    } catch (const std::exception& ex) {
        std::cerr << "tuples error: " << ex.what() << '\n';
        return 1;
    }
    OfdmConfig cfg = default_config();
    double baseline = ue_position.norm();
    double range_bin = resolutions(cfg).range_bin_m;
    for (std::size_t i = 0; i < tf.tuples.size(); ++i) {
        if (tf.tuples[i].d_u < baseline - range_bin) {
            std::cerr << "tuples error: entry " << i
                      << ": bistatic range sum undercuts the BS-UE baseline\n";
            return 1;
        }
        if (tf.tuples[i].d_b <= 0.0) {
            std::cerr << "tuples error: entry " << i << ": monostatic range must be positive\n";
            return 1;
        }
    }
    try {
        std::filesystem::create_directories(out_dir);
        std::ostringstream out;
        out << "target_id,d_b,v_b,theta_deg,theta_corrected,d_u,v_u,"
               "x_init,y_init,vx_init,vy_init,x_fused,y_fused,vx_fused,vy_fused,"
               "iters,converged,f_final,f_trace\n";
        using detail::fmt_g;
        for (std::size_t i = 0; i < tf.tuples.size(); ++i) {
            const ObservationTuple& y = tf.tuples[i];
            AngleCorrection corr{y.theta_b_deg, false};
            if (y.d_u > baseline)
                corr = correct_angle(y.d_b, y.d_u, y.theta_b_deg, ue_position);
            Vec2 q0 = initial_position(y.d_b, corr.theta_deg);
            VelocityInit vi = initial_velocity(q0, y.v_b, y.v_u, ue_position);
            StateEstimate init{q0, vi.velocity};
            FusedEstimate fe = irls_fuse(y, ue_position, init);
            out << i << ',' << fmt_g(y.d_b) << ',' << fmt_g(y.v_b) << ',' << fmt_g(y.theta_b_deg)
                << ',' << fmt_g(corr.theta_deg) << ',' << fmt_g(y.d_u) << ',' << fmt_g(y.v_u)
                << ',' << fmt_g(init.position.x) << ',' << fmt_g(init.position.y) << ','
                << fmt_g(init.velocity.x) << ',' << fmt_g(init.velocity.y) << ','
                << fmt_g(fe.state.position.x) << ',' << fmt_g(fe.state.position.y) << ','
                << fmt_g(fe.state.velocity.x) << ',' << fmt_g(fe.state.velocity.y) << ','
                << fe.iterations << ',' << (fe.converged ? 1 : 0) << ','
                << fmt_g(fe.objective_trace.empty() ? 0.0 : fe.objective_trace.back()) << ',';
            for (std::size_t k = 0; k < fe.objective_trace.size(); ++k) {
                if (k) out << ';';
                out << fmt_g(fe.objective_trace[k]);
            }
            out << '\n';
            std::cout << "target " << i << ": fused position (" << fmt_g(fe.state.position.x)
                      << ", " << fmt_g(fe.state.position.y) << "), velocity ("
                      << fmt_g(fe.state.velocity.x) << ", " << fmt_g(fe.state.velocity.y) << ")\n";
        }
        detail::atomic_write(out_dir + "/fused.csv", out.str());
        return 0;
    } catch (const std::exception& ex) {
        std::cerr << "runtime error: " << ex.what() << '\n';
        return 2;
    }
}

struct MonteCarloSummary {
    int runs = 0;
    int wins = 0;  // runs where fused RMSE < BS RMSE
    double mean_rmse_bs = 0.0, mean_rmse_fused = 0.0;
    double median_rmse_fused = 0.0, p90_rmse_fused = 0.0;
    double win_fraction = 0.0;
};

inline MonteCarloSummary run_montecarlo(const RunConfig& rc, int runs,
                                        std::vector<MetricsReport>* per_run = nullptr) {
    MonteCarloSummary sum;
    sum.runs = runs;
    std::vector<double> fused_rmses;
    for (int r = 0; r < runs; ++r) {
        std::uint64_t run_seed = mix_seed(rc.mc_base_seed, 0x5EED + r);
        SimResult res = run_simulation(rc, run_seed);
        if (per_run) per_run->push_back(res.metrics);
        sum.mean_rmse_bs += res.metrics.rmse_bs;
        sum.mean_rmse_fused += res.metrics.rmse_fused;
        fused_rmses.push_back(res.metrics.rmse_fused);
        if (res.metrics.fused_beats_bs) ++sum.wins;
    }
    sum.mean_rmse_bs /= runs;
    sum.mean_rmse_fused /= runs;
    std::sort(fused_rmses.begin(), fused_rmses.end());
    sum.median_rmse_fused = fused_rmses[fused_rmses.size() / 2];
    sum.p90_rmse_fused = fused_rmses[std::min(fused_rmses.size() - 1,
                                              static_cast<std::size_t>(fused_rmses.size() * 0.9))];
    sum.win_fraction = static_cast<double>(sum.wins) / runs;
    return sum;
}

inline int cmd_montecarlo(const std::string& config_path, int runs_override = -1) {
    RunConfig rc;
    try {
        rc = load_run_config(config_path);
    } catch (const std::exception& ex) {
        std::cerr << "config error: " << ex.what() << '\n';
        return 1;
    }
    int runs = runs_override > 0 ? runs_override : rc.mc_runs;
    if (runs < 1) {
        std::cerr << "config error: run count must be >= 1\n";
        return 1;
    }
    try {
        std::filesystem::create_directories(rc.out_dir);
        std::vector<MetricsReport> per_run;
        MonteCarloSummary sum = run_montecarlo(rc, runs, &per_run);

        using detail::fmt_g;
        std::ostringstream runs_csv;
        runs_csv << "run,rmse_bs_m,rmse_fused_m,fused_beats_bs\n";
        for (int r = 0; r < runs; ++r)
            runs_csv << r << ',' << fmt_g(per_run[r].rmse_bs) << ','
                     << fmt_g(per_run[r].rmse_fused) << ','
                     << (per_run[r].fused_beats_bs ? 1 : 0) << '\n';
        detail::atomic_write(rc.out_dir + "/montecarlo_runs.csv", runs_csv.str());

        std::ostringstream sum_csv;
        sum_csv << "runs,mean_rmse_bs_m,mean_rmse_fused_m,median_rmse_fused_m,"
                   "p90_rmse_fused_m,win_fraction\n";
        sum_csv << sum.runs << ',' << fmt_g(sum.mean_rmse_bs) << ',' << fmt_g(sum.mean_rmse_fused)
                << ',' << fmt_g(sum.median_rmse_fused) << ',' << fmt_g(sum.p90_rmse_fused) << ','
                << fmt_g(sum.win_fraction) << '\n';
        detail::atomic_write(rc.out_dir + "/montecarlo_summary.csv", sum_csv.str());

        std::cout << "runs=" << sum.runs << " mean_rmse_bs=" << fmt_g(sum.mean_rmse_bs)
                  << " mean_rmse_fused=" << fmt_g(sum.mean_rmse_fused)
                  << " win_fraction=" << fmt_g(sum.win_fraction) << '\n';
        return 0;
    } catch (const std::invalid_argument& ex) {
        std::cerr << "config error: " << ex.what() << '\n';
        return 1;
    } catch (const std::exception& ex) {
        std::cerr << "runtime error: " << ex.what() << '\n';
        return 2;
    }
}

}  // namespace isac
