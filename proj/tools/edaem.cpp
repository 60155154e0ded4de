#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "edaem/app.hpp"

int main(int argc, char** argv)
{
    using namespace edaem::app;

    CLI::App cli{"EDA search as Monte-Carlo EM"};
    cli.require_subcommand(1);

    RunArgs run_args;
    std::string run_out;
    std::uint64_t run_seed = 0;
    auto* run_cmd = cli.add_subcommand("run", "Run one search from a JSON config");
    run_cmd->add_option("--config", run_args.config_path, "Run config (JSON)")->required();
    auto* run_out_opt = run_cmd->add_option("--out", run_out, "Output directory (overrides config)");
    auto* run_seed_opt = run_cmd->add_option("--seed", run_seed, "Seed (overrides config)");

    DiagnoseArgs diag_args;
    std::string diag_out;
    auto* diag_cmd = cli.add_subcommand("diagnose", "Run the exact-oracle check suite");
    diag_cmd->add_option("--fixtures", diag_args.fixture_set, "\"default\" or a fixture JSON file");
    auto* diag_out_opt = diag_cmd->add_option("--out", diag_out, "Write reports.json here");

    SweepArgs sweep_args;
    std::string sweep_out;
    std::uint64_t sweep_seed = 0;
    double threshold = 0.0;
    auto* sweep_cmd = cli.add_subcommand("sweep", "Run one config across values of a parameter");
    sweep_cmd->add_option("--config", sweep_args.config_path, "Base run config (JSON)")->required();
    sweep_cmd->add_option("--param", sweep_args.param, "gamma, alpha, k, N, rho or beta")->required();
    sweep_cmd->add_option("--values", sweep_args.values, "Comma-separated values")->delimiter(',');
    sweep_cmd->add_option("--jobs", sweep_args.jobs, "Concurrent runs");
    auto* sweep_out_opt = sweep_cmd->add_option("--out", sweep_out, "Output directory (overrides config)");
    auto* sweep_seed_opt = sweep_cmd->add_option("--seed", sweep_seed, "Base seed (overrides config)");
    auto* threshold_opt = sweep_cmd->add_option("--threshold", threshold, "Target for iterations_to_threshold");

    try {
        cli.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = cli.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    if (run_cmd->parsed()) {
        if (*run_out_opt) run_args.out_dir = run_out;
        if (*run_seed_opt) run_args.seed = run_seed;
        return cmd_run(run_args);
    }
    if (diag_cmd->parsed()) {
        if (*diag_out_opt) diag_args.out_dir = diag_out;
        return cmd_diagnose(diag_args);
    }
    if (*sweep_out_opt) sweep_args.out_dir = sweep_out;
    if (*sweep_seed_opt) sweep_args.seed = sweep_seed;
    if (*threshold_opt) sweep_args.threshold = threshold;
    return cmd_sweep(sweep_args);
}
