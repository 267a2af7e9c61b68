// Command-line front end: run, validate, identities, bvp.

#include "pendula/identities.hpp"
#include "pendula/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>

using namespace pendula;
using nlohmann::json;

namespace {

int code(Exit e) { return static_cast<int>(e); }

int print_identities() {
    bool all = true;
    std::printf("%-28s %8s %14s %10s  %s\n", "identity", "cases", "worst", "limit", "result");
    for (const auto &c : identity_suite()) {
        std::printf("%-28s %8zu %14.6e %10.3e  %s\n", c.name.c_str(), c.cases, c.worst, c.tolerance,
                    c.pass ? "pass" : "FAIL");
        all = all && c.pass;
    }
    return all ? 0 : 1;
}

int validate(const RunConfig &c) {
    const auto itin = compile_itinerary(c.path, c.p, c.itinerary());
    const json v = validate_itinerary(itin);
    std::cout << v.dump(2) << '\n';
    return v["pass"].get<bool>() ? 0 : 1;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Energy-transfer orbits in a lattice of coupled pendula"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path, out_dir;
    bool quiet = false;
    app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "output directory (overrides the config)");
    app.add_flag("--quiet", quiet, "suppress progress messages");

    auto *run = app.add_subcommand("run", "compile, minimize, certify, replay and write artifacts");
    bool validate_only = false, identities = false;
    run->add_flag("--validate-only", validate_only, "compile and validate the itinerary only");
    run->add_flag("--identities", identities, "run the pendulum identity suite only");

    auto *val = app.add_subcommand("validate", "compile and validate the itinerary");
    auto *ids = app.add_subcommand("identities", "pendulum sensitivity identity suite");

    auto *bvp = app.add_subcommand("bvp", "solve one pendulum boundary-value problem");
    double alpha = 0, beta = 0, T = 0;
    std::string branch;
    bvp->add_option("--alpha", alpha, "start angle")->required();
    bvp->add_option("--beta", beta, "end angle")->required();
    bvp->add_option("-T,--time", T, "duration")->required();
    bvp->add_option("--branch", branch, "boundary class (default: classify)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : code(Exit::config);
    }

    if (*ids || (*run && identities)) return print_identities();

    if (*bvp) {
        try {
            PendulumArc arc;
            if (branch.empty()) {
                arc = bvp_solve(alpha, beta, T);
            } else {
                const auto b = branch_from_string(branch);
                if (!b) {
                    std::cerr << "unknown branch '" << branch << "'\n";
                    return code(Exit::config);
                }
                arc = bvp_solve(alpha, beta, *b, T);
            }
            const json j = {{"alpha", arc.alpha},     {"beta", arc.beta_end}, {"T", arc.T},
                            {"E", arc.E},             {"v0", arc.v0},         {"v1", arc.v1},
                            {"branch", to_string(arc.branch)}, {"action", arc_action(arc)},
                            {"x_min", arc.x_min},     {"x_max", arc.x_max}};
            std::cout << j.dump(2) << '\n';
            return 0;
        } catch (const DomainError &e) {
            std::cerr << "[bvp] " << e.what() << '\n';
            return code(Exit::config);
        } catch (const std::exception &e) {
            std::cerr << "[bvp] " << e.what() << '\n';
            return code(Exit::solver);
        }
    }

    if (config_path.empty()) {
        std::cerr << "--config is required\n";
        return code(Exit::config);
    }
    RunConfig cfg;
    try {
        cfg = load_config(config_path);
        if (!out_dir.empty()) cfg.output = out_dir;
    } catch (const ConfigError &e) {
        std::cerr << "[config] " << e.what() << '\n';
        return code(Exit::config);
    }

    if (*val || validate_only) {
        try {
            return validate(cfg);
        } catch (const std::exception &e) {
            std::cerr << "[compile] " << e.what() << '\n';
            return 1;
        }
    }

    const RunResult res = run_pipeline(cfg, quiet);
    if (!quiet) {
        if (res.code == Exit::ok)
            std::cerr << "artifacts written to " << cfg.output << '\n';
        else
            std::cerr << "stopped at " << res.stage << ": " << res.message << '\n';
    }
    return code(res.code);
}
