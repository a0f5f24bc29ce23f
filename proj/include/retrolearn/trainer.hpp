#pragma once

#include "retrolearn/data.hpp"
#include "retrolearn/metrics.hpp"
#include "retrolearn/mlp.hpp"
#include "retrolearn/optim.hpp"
#include "retrolearn/retrospection.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace retrolearn {

enum class Method { Std, Lsr, MaxEntropy, Lwr };
enum class OptimizerKind { Sgd, Adam };

std::string to_string(Method m);
std::string to_string(OptimizerKind k);
/// Accepts STD, LSR, MaxEntropy (or Max-Entropy, MaxH), LWR; case-insensitive.
Method parse_method(const std::string& text);
OptimizerKind parse_optimizer(const std::string& text);

struct TrainConfig {
    Method method = Method::Std;
    std::vector<std::size_t> hidden = {128, 128};
    std::string activation = "relu";
    std::string init = "kaiming_uniform";

    OptimizerKind optimizer = OptimizerKind::Adam;
    SgdOptions sgd;
    AdamOptions adam;

    int epochs = 50;              // M
    std::size_t batch_size = 16;  // B
    double tau = 5.0;
    int interval = 1;             // k
    double lsr_epsilon = 0.1;
    double max_entropy_lambda = 0.1;
    /// When both are set, LWR uses these weights after the first commit
    /// instead of the linear schedule.
    std::optional<double> fixed_alpha;
    std::optional<double> fixed_beta;

    std::uint64_t seed = 1;
    double noise_rate = 0.0;
    int eval_every = 1;
    std::size_t ece_bins = kDefaultEceBins;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// Independent streams derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);
inline constexpr std::uint64_t kInitStream = 1;
inline constexpr std::uint64_t kBatchStream = 2;
inline constexpr std::uint64_t kCorruptionStream = 3;

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    std::optional<double> test_acc;  // empty when the epoch was not evaluated
    double alpha = 1.0;
    double beta = 0.0;
    bool committed = false;
};

struct StepRecord {
    int epoch = 0;
    std::size_t batch = 0;
    double loss = 0.0;
    double ce_part = 0.0;  // LWR only
    double kl_part = 0.0;  // LWR only
    double alpha = 1.0;
    double beta = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::vector<StepRecord> steps;
    double last_acc = 0.0;
    double best_acc = 0.0;
    int best_epoch = 0;
    double wall_time_s = 0.0;
    EceReport calibration;  // final model on the test split
    int commits = 0;
    std::vector<std::size_t> corrupted_ids;
};

struct Evaluation {
    double accuracy = 0.0;
    std::vector<int> predictions;
    std::vector<double> confidences;  // winning softmax probability, tau = 1
    std::vector<bool> correct;
};

Evaluation evaluate(Mlp& model, const LabeledDataset& ds);

/// Optional observation points for tests and tooling.
struct TrainHooks {
    std::function<void(int epoch, const SoftLabelStore&)> on_epoch_end;
};

struct TrainOutcome {
    TrainReport report;
    Mlp model;
};

/// Full training run. LWR epochs 1..k minimize cross-entropy; soft labels are
/// recorded on every epoch and committed when epoch % k == 0; later epochs
/// minimize the retrospection loss with stored labels looked up by sample id.
TrainOutcome train_model(const TrainConfig& config, const LabeledDataset& train_ds, const LabeledDataset& test_ds,
                         const TrainHooks* hooks = nullptr);

TrainReport train(const TrainConfig& config, const LabeledDataset& train_ds, const LabeledDataset& test_ds);

// ---------------------------------------------------------------------------
// Sweeps.

struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation
    std::size_t count = 0;
};

Aggregate aggregate(std::span<const double> values);

struct SweepGrid {
    std::vector<double> taus;
    std::vector<int> intervals;
};

struct SweepRun {
    TrainConfig config;
    std::optional<TrainReport> report;
    std::string error;  // set when the run failed
    bool ok() const noexcept { return report.has_value(); }
};

struct SweepCell {
    double tau = 0.0;
    int interval = 0;
    Aggregate last_acc;
    Aggregate best_acc;
    Aggregate ece;
    std::size_t failures = 0;
};

struct SweepResult {
    std::vector<SweepRun> runs;  // tau-major, then k, then seed
    std::vector<SweepCell> cells;
};

/// Runs fn(0..count-1) on up to `jobs` threads. Results are indexed, so the
/// outcome does not depend on scheduling.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn);

/// Removes duplicate grid values (keeping first occurrence); returns how many were dropped.
std::size_t dedupe_grid(SweepGrid& grid);

/// Cartesian product tau x k x seed of runs that share `base` except for
/// tau, k and seed.
SweepResult run_sweep(const TrainConfig& base, SweepGrid grid, const std::vector<std::uint64_t>& seeds,
                      const LabeledDataset& train_ds, const LabeledDataset& test_ds, std::size_t jobs = 1);

}  // namespace retrolearn
