// Command-line driver: run, sweep, robustness and report subcommands.

#include "retrolearn/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <optional>

namespace {

void add_common(CLI::App* cmd, retrolearn::CommonOptions& opts, std::optional<std::uint64_t>& seed) {
    cmd->add_option("--config", opts.config_path, "Experiment config file or name under configs/")->required();
    cmd->add_option("--set", opts.overrides, "Override a config field, section.key=VALUE (repeatable)");
    cmd->add_option("--seed", seed, "Run seed (falls back to run.seed, then RETROLEARN_SEED)");
    cmd->add_option("--method", opts.method, "Override method.name (STD, LSR, MaxEntropy, LWR)");
    cmd->add_option("--out", opts.out_dir, "Output directory")->capture_default_str();
    cmd->add_option("--jobs", opts.jobs, "Parallel runs for sweeps")->check(CLI::PositiveNumber)->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"retrolearn: training with retrospective soft labels, baselines and calibration"};
    app.require_subcommand(1);
    app.set_version_flag("--version", retrolearn::kToolVersion);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Only print errors");

    retrolearn::RunOptions run;
    std::optional<std::uint64_t> run_seed;
    auto* run_cmd = app.add_subcommand("run", "Train one configuration");
    add_common(run_cmd, run, run_seed);
    run_cmd->add_flag("--dump-soft-labels", run.dump_soft_labels, "Write the final active soft labels (LWR)");

    retrolearn::SweepOptions sweep;
    std::optional<std::uint64_t> sweep_seed;
    auto* sweep_cmd = app.add_subcommand("sweep", "Grid over temperature and snapshot interval");
    add_common(sweep_cmd, sweep, sweep_seed);
    sweep_cmd->add_option("--tau", sweep.taus, "Temperatures")->delimiter(',')->required();
    sweep_cmd->add_option("--k", sweep.intervals, "Snapshot intervals")->delimiter(',')->required();
    sweep_cmd->add_option("--seeds", sweep.seeds, "Seeds")->delimiter(',');

    retrolearn::RobustnessOptions robust;
    std::optional<std::uint64_t> robust_seed;
    robust.rates = {0.2, 0.4, 0.6, 0.8};
    robust.methods = {"STD", "LWR"};
    auto* robust_cmd = app.add_subcommand("robustness", "Label-corruption protocol (last vs best accuracy)");
    add_common(robust_cmd, robust, robust_seed);
    robust_cmd->add_option("--rates", robust.rates, "Noise rates")->delimiter(',')->capture_default_str();
    robust_cmd->add_option("--methods", robust.methods, "Methods")->delimiter(',')->capture_default_str();
    robust_cmd->add_option("--seeds", robust.seeds, "Seeds")->delimiter(',');

    retrolearn::ReportOptions report;
    auto* report_cmd = app.add_subcommand("report", "Re-aggregate an existing results.csv");
    report_cmd->add_option("results", report.results_path, "results.csv from run/sweep/robustness")
        ->required()
        ->check(CLI::ExistingFile);
    report_cmd->add_option("--out", report.out_dir, "Output directory (default: next to the input)");

    CLI11_PARSE(app, argc, argv);
    if (quiet) spdlog::set_level(spdlog::level::err);

    if (*run_cmd) {
        run.seed = run_seed;
        return retrolearn::cmd_run(run);
    }
    if (*sweep_cmd) {
        sweep.seed = sweep_seed;
        return retrolearn::cmd_sweep(sweep);
    }
    if (*robust_cmd) {
        robust.seed = robust_seed;
        return retrolearn::cmd_robustness(robust);
    }
    return retrolearn::cmd_report(report);
}
