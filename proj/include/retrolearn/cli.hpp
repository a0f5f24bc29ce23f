#pragma once

#include "retrolearn/experiment.hpp"
#include "retrolearn/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace retrolearn {

inline constexpr const char* kToolVersion = "0.3.0";
inline constexpr const char* kSeedEnvVar = "RETROLEARN_SEED";

/// One row of a results table. Column order in CSV follows declaration order.
struct ResultRow {
    std::string run_id;
    std::string method;
    std::string dataset;
    std::uint64_t seed = 0;
    double tau = 0.0;
    int k = 0;
    int epochs = 0;
    std::size_t batch = 0;
    double noise_rate = 0.0;
    double last_acc = 0.0;
    double best_acc = 0.0;
    double ece = 0.0;
    double wall_time_s = 0.0;
    std::string status = "ok";
    std::string config;  // provenance_string of the run
};

inline constexpr const char* kResultsHeader =
    "run_id,method,dataset,seed,tau,k,epochs,batch,noise_rate,last_acc,best_acc,ece,wall_time_s,status,config";
inline constexpr const char* kEpochLogHeader = "epoch,train_loss,train_acc,test_acc,alpha,beta,committed";
inline constexpr const char* kAggregateHeader =
    "kind,method,dataset,tau,k,epochs,batch,noise_rate,runs,failures,last_acc_mean,last_acc_std,best_acc_mean,"
    "best_acc_std,ece_mean,ece_std";

ResultRow make_result_row(const TrainConfig& config, const std::string& dataset, const TrainReport& report);
ResultRow make_failed_row(const TrainConfig& config, const std::string& dataset, const std::string& error);

void write_results_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);
void write_epoch_log(const TrainReport& report, const std::filesystem::path& path);

/// Mean/std over successful rows grouped by every hyperparameter except seed.
struct AggregateRow {
    std::string method;
    std::string dataset;
    double tau = 0.0;
    int k = 0;
    int epochs = 0;
    std::size_t batch = 0;
    double noise_rate = 0.0;
    std::size_t failures = 0;
    Aggregate last_acc;
    Aggregate best_acc;
    Aggregate ece;
};

/// Groups in first-appearance order.
std::vector<AggregateRow> aggregate_rows(const std::vector<ResultRow>& rows);
void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::filesystem::path& path);
void write_aggregate_text(const std::vector<AggregateRow>& rows, std::ostream& out);

// ---------------------------------------------------------------------------

struct CommonOptions {
    std::filesystem::path config_path;
    std::vector<std::string> overrides;  // section.key=value
    std::optional<std::uint64_t> seed;
    std::optional<std::string> method;
    std::filesystem::path out_dir = "out";
    std::size_t jobs = 1;
};

struct RunOptions : CommonOptions {
    bool dump_soft_labels = false;
};

struct SweepOptions : CommonOptions {
    std::vector<double> taus;
    std::vector<int> intervals;
    std::vector<std::uint64_t> seeds;
};

struct RobustnessOptions : CommonOptions {
    std::vector<double> rates;
    std::vector<std::string> methods;
    std::vector<std::uint64_t> seeds;
};

struct ReportOptions {
    std::filesystem::path results_path;
    std::filesystem::path out_dir;
};

/// Each command returns a process exit code and prints diagnostics to stderr.
int cmd_run(const RunOptions& options);
int cmd_sweep(const SweepOptions& options);
int cmd_robustness(const RobustnessOptions& options);
int cmd_report(const ReportOptions& options);

/// An existing path is used as is; a bare name such as `iris_lwr` is looked
/// up as `<name>.ini` in the working directory, then in `configs/`.
std::filesystem::path find_config(const std::filesystem::path& name);

/// Config resolution shared by the commands: file, overrides, --method, then
/// the seed (flag, else config file, else RETROLEARN_SEED, else default).
ExperimentConfig resolve_config(const CommonOptions& options);

}  // namespace retrolearn
