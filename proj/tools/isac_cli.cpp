// Command-line front end: simulate / fuse / montecarlo.
// Exit codes: 0 success, 1 usage or config error, 2 runtime failure.

#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "isac/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"MIMO-OFDM ISAC simulator: BS monostatic + BS-UE bistatic cooperative sensing"};
    app.require_subcommand(1);

    std::string config_path, out_dir, tuples_path, ue_str, sign;
    std::int64_t seed = -1;
    bool dump_maps = false;
    int runs = -1;

    auto* sim = app.add_subcommand("simulate", "run the end-to-end pipeline on one scene");
    sim->add_option("--config", config_path, "run configuration (JSON)")->required();
    sim->add_option("--seed", seed, "override the scenario seed");
    sim->add_option("--out", out_dir, "output directory override");
    sim->add_flag("--dump-maps", dump_maps, "also write range-Doppler map dumps");

    auto* fuse = app.add_subcommand("fuse", "fuse an observation-tuple file (no radio front end)");
    fuse->add_option("--tuples", tuples_path, "observation tuples file")->required();
    fuse->add_option("--ue", ue_str, "UE position as x,y in meters")->required();
    fuse->add_option("--sign", sign, "sign convention override: paper|internal");
    fuse->add_option("--out", out_dir, "output directory");

    auto* mc = app.add_subcommand("montecarlo", "independent seeded batch runs");
    mc->add_option("--config", config_path, "run configuration (JSON)")->required();
    mc->add_option("--runs", runs, "number of runs (overrides the config)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (sim->parsed()) return isac::cmd_simulate(config_path, seed, out_dir, dump_maps);

    if (fuse->parsed()) {
        auto comma = ue_str.find(',');
        if (comma == std::string::npos) {
            std::cerr << "usage error: --ue expects x,y\n";
            return 1;
        }
        isac::Vec2 ue;
        try {
            ue.x = std::stod(ue_str.substr(0, comma));
            ue.y = std::stod(ue_str.substr(comma + 1));
        } catch (const std::exception&) {
            std::cerr << "usage error: --ue expects numeric x,y\n";
            return 1;
        }
        if (sign != "" && sign != "paper" && sign != "internal") {
            std::cerr << "usage error: --sign must be paper or internal\n";
            return 1;
        }
        return isac::cmd_fuse(tuples_path, ue, sign, out_dir.empty() ? "." : out_dir);
    }

    if (mc->parsed()) return isac::cmd_montecarlo(config_path, runs);
    return 1;
}
