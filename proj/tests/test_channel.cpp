#include <cmath>
#include <limits>

#include "catch2/catch_amalgamated.hpp"
#include "isac/channel.hpp"
#include "isac/estimators.hpp"

using namespace isac;
using Catch::Approx;

namespace {
constexpr double kNoNoise = std::numeric_limits<double>::infinity();

OfdmConfig small_cfg() {
    OfdmConfig cfg = default_config();
    cfg.n_subcarriers = 128;
    cfg.n_symbols = 64;
    cfg.n_guard_low = 4;
    cfg.n_guard_high = 3;
    cfg.n_cp = 31;
    cfg.n_tx = 8;
    cfg.n_rx = 8;
    return cfg;
}
}  // namespace

TEST_CASE("steering vector", "[channel]") {
    double lambda = kSpeedOfLight / 24e9;
    auto broadside = steering(0.0, 16, lambda / 2.0, lambda);
    for (const cxd& a : broadside) CHECK(std::abs(a - cxd{1.0, 0.0}) < 1e-12);

    // 30 degrees, half-wavelength spacing: element 1 is exp(-j pi sin 30) = -j
    auto a30 = steering(30.0, 4, lambda / 2.0, lambda);
    CHECK(a30[1].real() == Approx(0.0).margin(1e-12));
    CHECK(a30[1].imag() == Approx(-1.0).margin(1e-12));

    double norm2 = 0.0;
    for (const cxd& a : a30) norm2 += std::norm(a);
    CHECK(norm2 == Approx(4.0).margin(1e-12));

    CHECK_THROWS_AS(steering(0.0, 0, lambda / 2.0, lambda), std::invalid_argument);
}

TEST_CASE("path amplitude", "[channel]") {
    // doubling both legs quarters the magnitude
    PathGain near = path_amplitude(PathKind::Bistatic, 10.0, 20.0, 1.0, 5);
    PathGain far = path_amplitude(PathKind::Bistatic, 20.0, 40.0, 1.0, 5);
    CHECK(std::abs(far.amplitude) == Approx(std::abs(near.amplitude) / 4.0).margin(1e-15));

    // rcs 3.5 at the first target range
    double r = 64.949288;
    PathGain g = path_amplitude(PathKind::Monostatic, r, r, std::sqrt(3.5), 5);
    CHECK(std::abs(g.amplitude) == Approx(4.434914324e-4).margin(1e-9));

    PathGain again = path_amplitude(PathKind::Monostatic, r, r, std::sqrt(3.5), 5);
    CHECK(g.amplitude == again.amplitude);  // same seed, same phase
    PathGain other = path_amplitude(PathKind::Monostatic, r, r, std::sqrt(3.5), 6);
    CHECK(std::arg(g.amplitude) != std::arg(other.amplitude));

    CHECK_THROWS_AS(path_amplitude(PathKind::Monostatic, 0.0, 1.0, 1.0, 5), std::domain_error);
}

TEST_CASE("bs cube: static broadside target", "[channel]") {
    OfdmConfig cfg = small_cfg();
    Scenario scen;
    scen.ue_position = {80.0, 60.0};
    scen.targets.push_back({{50.0, 0.0}, {0.0, 0.0}, 3.5});  // theta = 0, static
    TxFrame frame = build_frame(cfg, 3);
    CxCube cube = synth_bs_cube(scen, cfg, frame, kNoNoise, 9);

    // broadside: every antenna sees the same signal
    for (int i = 1; i < cfg.n_rx; ++i)
        for (int k = 0; k < cfg.n_subcarriers; k += 13)
            for (int m = 0; m < cfg.n_symbols; m += 7)
                CHECK(std::abs(cube(i, k, m) - cube(0, k, m)) < 1e-15);

    // static target: after data removal the symbol axis is flat (DC Doppler)
    SensingCube clean = remove_data(cube, frame, cfg);
    for (int k = cfg.first_active(); k <= cfg.last_active(); k += 11)
        for (int m = 1; m < cfg.n_symbols; m += 9)
            CHECK(std::abs(clean(0, k, m) - clean(0, k, 0)) < 1e-12);
}

TEST_CASE("bs cube: subcarrier phase ramp matches the delay", "[channel]") {
    OfdmConfig cfg = small_cfg();
    Scenario scen;
    scen.ue_position = {80.0, 60.0};
    scen.targets.push_back({{42.0, 17.0}, {5.0, -3.0}, 2.0});
    TxFrame frame = build_frame(cfg, 3);
    CxCube cube = synth_bs_cube(scen, cfg, frame, kNoNoise, 9);
    SensingCube clean = remove_data(cube, frame, cfg);

    double tau = path_delay_mono(scen.targets[0].position);
    cxd expected_step = std::polar(1.0, -2.0 * kPi * cfg.delta_f * tau);
    for (int k = cfg.first_active(); k < cfg.last_active(); k += 5) {
        cxd ratio = clean(2, k + 1, 10) / clean(2, k, 10);
        CHECK(std::abs(ratio - expected_step) < 1e-10);
    }
}

TEST_CASE("bs cube: determinism and guard silence", "[channel]") {
    OfdmConfig cfg = small_cfg();
    Scenario scen;
    scen.ue_position = {80.0, 60.0};
    scen.targets.push_back({{42.0, 17.0}, {5.0, -3.0}, 2.0});
    scen.scatterers.push_back({{30.0, -12.0}, 1.2});
    TxFrame frame = build_frame(cfg, 3);

    CxCube a = synth_bs_cube(scen, cfg, frame, 10.0, 77);
    CxCube b = synth_bs_cube(scen, cfg, frame, 10.0, 77);
    REQUIRE(a.data.size() == b.data.size());
    for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);

    for (int i = 0; i < cfg.n_rx; ++i)
        for (int k = 0; k < cfg.n_subcarriers; ++k) {
            if (cfg.is_active(k)) continue;
            for (int m = 0; m < cfg.n_symbols; ++m) CHECK(a(i, k, m) == cxd{0.0, 0.0});
        }
}

TEST_CASE("bs cube: superposition with noise off", "[channel]") {
    OfdmConfig cfg = small_cfg();
    TxFrame frame = build_frame(cfg, 3);
    Scenario both, only_a, only_b;
    both.ue_position = only_a.ue_position = only_b.ue_position = {80.0, 60.0};
    TargetTruth ta{{42.0, 17.0}, {5.0, -3.0}, 2.0};
    TargetTruth tb{{55.0, -9.0}, {-4.0, 8.0}, 3.5};
    both.targets = {ta, tb};
    only_a.targets = {ta};
    only_b.targets = {tb};

    CxCube cube_both = synth_bs_cube(both, cfg, frame, kNoNoise, 21);
    CxCube cube_a = synth_bs_cube(only_a, cfg, frame, kNoNoise, 21);
    CxCube cube_b = synth_bs_cube(only_b, cfg, frame, kNoNoise, 21);

    double max_err = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < cube_both.data.size(); ++i) {
        max_err = std::max(max_err,
                           std::abs(cube_both.data[i] - (cube_a.data[i] + cube_b.data[i])));
        scale = std::max(scale, std::abs(cube_both.data[i]));
    }
    CHECK(max_err <= 1e-12 * scale);
}

TEST_CASE("bs cube: empty scene is noise only", "[channel]") {
    OfdmConfig cfg = small_cfg();
    Scenario scen;
    scen.ue_position = {80.0, 60.0};
    TxFrame frame = build_frame(cfg, 3);
    CxCube cube = synth_bs_cube(scen, cfg, frame, 0.0, 5);
    double power = 0.0;
    int count = 0;
    for (int i = 0; i < cfg.n_rx; ++i)
        for (int k = cfg.first_active(); k <= cfg.last_active(); ++k)
            for (int m = 0; m < cfg.n_symbols; ++m) {
                power += std::norm(cube(i, k, m));
                ++count;
            }
    CHECK(power / count == Approx(1.0).epsilon(0.02));  // unit-variance fallback
}

TEST_CASE("delay and Doppler land on the predicted periodogram bins", "[channel]") {
    OfdmConfig cfg = default_config();
    Scenario scen;
    scen.ue_position = {80.8, 59.0};
    scen.targets.push_back({{59.92, 25.06}, {-15.0, 12.0}, 3.5});
    TxFrame frame = build_frame(cfg, 3);
    CxCube cube = synth_bs_cube(scen, cfg, frame, kNoNoise, 9);
    SensingCube clean = remove_data(cube, frame, cfg);
    CxMat f = beamform(clean, aoa_from_bs(scen.targets[0].position), cfg);
    RangeDopplerMap map = range_doppler(f, cfg);
    auto peaks = extract_peaks(map, 1);
    REQUIRE(peaks.size() == 1);

    double tau = path_delay_mono(scen.targets[0].position);
    double fd = doppler_mono(scen.targets[0].position, scen.targets[0].velocity, cfg.fc);
    int expected_range = static_cast<int>(std::lround(tau * cfg.n_subcarriers * cfg.delta_f));
    int expected_dopp = static_cast<int>(std::lround(fd * cfg.n_symbols * cfg.symbol_duration()));
    CHECK(std::abs(peaks[0].range_bin - expected_range) <= 1);
    CHECK(std::abs(map.signed_doppler_bin(peaks[0].doppler_idx) - expected_dopp) <= 1);
}

TEST_CASE("ue grid: bistatic delay wiring and zero-velocity scenes", "[channel]") {
    OfdmConfig cfg = small_cfg();
    Scenario scen;
    scen.ue_position = {80.0, 60.0};
    scen.targets.push_back({{42.0, 17.0}, {0.0, 0.0}, 2.0});
    TxFrame frame = build_frame(cfg, 3);
    CxMat grid = synth_ue_grid(scen, cfg, frame, kNoNoise, 9);
    SensingGrid clean = remove_data(grid, frame, cfg);

    double tau = path_delay_bi(scen.targets[0].position, scen.ue_position);
    cxd expected_step = std::polar(1.0, -2.0 * kPi * cfg.delta_f * tau);
    for (int k = cfg.first_active(); k < cfg.last_active(); k += 5) {
        cxd ratio = clean(k + 1, 10) / clean(k, 10);
        CHECK(std::abs(ratio - expected_step) < 1e-10);
    }
    // static scene: symbol axis flat
    for (int k = cfg.first_active(); k <= cfg.last_active(); k += 11)
        for (int m = 1; m < cfg.n_symbols; m += 9)
            CHECK(std::abs(clean(k, m) - clean(k, 0)) < 1e-12);

    CxMat again = synth_ue_grid(scen, cfg, frame, kNoNoise, 9);
    for (std::size_t i = 0; i < grid.data.size(); ++i) CHECK(grid.data[i] == again.data[i]);
}
