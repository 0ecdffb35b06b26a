// Command-line front end: classify | verify-lyapunov | simulate | experiment.
// All experiment parameters come from a JSON config; flags only pick the
// config, output directory, thread count and verbosity.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "prbm/config.hpp"
#include "prbm/errors.hpp"
#include "prbm/runner.hpp"

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::ios_base::failure("cannot read config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int resolve_threads(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("PARABOLIC_RBM_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reflected diffusion simulator for generalized parabolic domains"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    int threads = 0;
    bool verbose = false;
    std::string experiment_mode;

    auto add_common = [&](CLI::App* cmd, bool need_config) {
        auto* opt = cmd->add_option("--config", config_path, "JSON experiment config");
        if (need_config) opt->required();
        cmd->add_option("--out", out_dir, "output directory (overrides config)");
        cmd->add_option("--threads", threads,
                        "worker threads (default: PARABOLIC_RBM_THREADS or 1)");
        cmd->add_flag("--verbose", verbose, "print the one-line summary to stderr");
    };

    CLI::App* classify_cmd = app.add_subcommand("classify", "closed-form phase classification");
    add_common(classify_cmd, true);
    CLI::App* verify_cmd =
        app.add_subcommand("verify-lyapunov", "search and check a stationary drift certificate");
    add_common(verify_cmd, true);
    CLI::App* simulate_cmd =
        app.add_subcommand("simulate", "run an ensemble and dump trajectory/hit CSVs");
    add_common(simulate_cmd, true);
    CLI::App* experiment_cmd = app.add_subcommand("experiment", "run a quantitative experiment");
    add_common(experiment_cmd, true);
    experiment_cmd->add_option("mode", experiment_mode,
                               "return-tails|invariant-tail|tv-decay|transience|moments|drift-test");

    CLI11_PARSE(app, argc, argv);

    try {
        prbm::ExperimentConfig cfg = prbm::parse_config(slurp(config_path));
        if (app.got_subcommand(classify_cmd)) cfg.mode = "classify";
        if (app.got_subcommand(verify_cmd)) cfg.mode = "verify-lyapunov";
        if (app.got_subcommand(simulate_cmd)) cfg.mode = "simulate";
        if (app.got_subcommand(experiment_cmd) && !experiment_mode.empty())
            cfg.mode = experiment_mode;
        if (!out_dir.empty()) cfg.output_directory = out_dir;

        const prbm::RunResult res = prbm::run_experiment(cfg, resolve_threads(threads), verbose);
        std::puts(res.summary.c_str());
        if (cfg.mode == "classify" || cfg.mode == "verify-lyapunov")
            std::puts(res.report_json.c_str());
        return res.exit_code;
    } catch (const std::ios_base::failure& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
