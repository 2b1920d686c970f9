#include <cmath>

#include "catch2/catch_amalgamated.hpp"
#include "isac/ofdm.hpp"

using namespace isac;
using Catch::Approx;

TEST_CASE("default numerology", "[ofdm]") {
    OfdmConfig cfg = default_config();
    CHECK(cfg.n_subcarriers == 617);
    CHECK(cfg.n_symbols == 512);
    CHECK(cfg.n_cp == 149);
    CHECK(cfg.n_guard_low == 9);
    CHECK(cfg.n_guard_high == 8);
    CHECK(cfg.n_tx == 16);
    CHECK(cfg.n_rx == 16);
    CHECK(cfg.fc == 24e9);
    CHECK(cfg.delta_f == 120e3);
    CHECK(cfg.spacing() == Approx(0.5 * kSpeedOfLight / 24e9));
    // T_s = (N + N_cp) / (N df)
    CHECK(cfg.symbol_duration() * 1e6 == Approx(10.345759049).margin(1e-6));
    CHECK(cfg.symbol_core() * cfg.delta_f == Approx(1.0).margin(1e-15));
    CHECK(cfg.symbol_duration() > cfg.symbol_core());
    CHECK(cfg.n_active() == 600);
    CHECK(cfg.first_active() == 9);
    CHECK(cfg.last_active() == 608);
}

TEST_CASE("config validation", "[ofdm]") {
    OfdmConfig cfg = default_config();
    cfg.n_guard_low = 400;
    cfg.n_guard_high = 300;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = default_config();
    cfg.zero_pad = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("frame build determinism and modulus", "[ofdm]") {
    OfdmConfig cfg = default_config();
    TxFrame a = build_frame(cfg, 1);
    TxFrame b = build_frame(cfg, 1);
    REQUIRE(a.data.data.size() == b.data.data.size());
    for (std::size_t i = 0; i < a.data.data.size(); ++i) CHECK(a.data.data[i] == b.data.data[i]);

    TxFrame c = build_frame(cfg, 2);
    bool any_different = false;
    for (std::size_t i = 0; i < a.data.data.size() && !any_different; ++i)
        any_different = a.data.data[i] != c.data.data[i];
    CHECK(any_different);

    for (int k = 0; k < cfg.n_subcarriers; ++k)
        for (int m = 0; m < cfg.n_symbols; ++m) {
            if (cfg.is_active(k)) {
                CHECK(std::abs(a.data(k, m)) == Approx(1.0).margin(1e-12));
            } else {
                CHECK(a.data(k, m) == cxd{0.0, 0.0});
            }
        }

    double wnorm = 0.0;
    for (const cxd& w : a.weights) wnorm += std::norm(w);
    CHECK(std::sqrt(wnorm) == Approx(1.0).margin(1e-12));
    CHECK(static_cast<int>(a.weights.size()) == cfg.n_tx);
}

TEST_CASE("resolutions", "[ofdm]") {
    OfdmConfig cfg = default_config();
    Resolutions r = resolutions(cfg);
    CHECK(r.range_bin_m == Approx(2.024530375).margin(1e-8));
    CHECK(r.velocity_bin_mps == Approx(1.179090513).margin(1e-8));
    CHECK(r.angle_grid_deg == 0.1);

    // doubling the subcarrier spacing halves the range bin
    OfdmConfig wide = cfg;
    wide.delta_f = 2.0 * cfg.delta_f;
    CHECK(resolutions(wide).range_bin_m == Approx(0.5 * r.range_bin_m).margin(1e-12));
}
