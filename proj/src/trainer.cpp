#include "retrolearn/trainer.hpp"

#include "retrolearn/errors.hpp"
#include "retrolearn/losses.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace retrolearn {

std::string to_string(Method m) {
    switch (m) {
        case Method::Std: return "STD";
        case Method::Lsr: return "LSR";
        case Method::MaxEntropy: return "MaxEntropy";
        case Method::Lwr: return "LWR";
    }
    return "unknown";
}

std::string to_string(OptimizerKind k) {
    return k == OptimizerKind::Adam ? "adam" : "sgd_momentum";
}

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

Method parse_method(const std::string& text) {
    const std::string t = lower(text);
    if (t == "std") return Method::Std;
    if (t == "lsr") return Method::Lsr;
    if (t == "maxentropy" || t == "max-entropy" || t == "max_entropy" || t == "maxh" || t == "max-h") {
        return Method::MaxEntropy;
    }
    if (t == "lwr") return Method::Lwr;
    throw ConfigError("unknown method '" + text + "' (expected STD, LSR, MaxEntropy or LWR)");
}

OptimizerKind parse_optimizer(const std::string& text) {
    const std::string t = lower(text);
    if (t == "adam") return OptimizerKind::Adam;
    if (t == "sgd" || t == "sgd_momentum") return OptimizerKind::Sgd;
    throw ConfigError("unknown optimizer '" + text + "' (expected adam or sgd_momentum)");
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) { throw ConfigError(field + ": " + why); };
    if (hidden.empty()) fail("model.hidden", "at least one hidden layer is required");
    for (std::size_t w : hidden) {
        if (w == 0) fail("model.hidden", "layer widths must be positive");
    }
    if (activation != "relu") fail("model.activation", "only 'relu' is supported");
    if (init != "kaiming_uniform") fail("model.init", "only 'kaiming_uniform' is supported");
    if (epochs < 1) fail("run.epochs", "must be >= 1");
    if (batch_size < 1) fail("run.batch_size", "must be >= 1");
    if (eval_every < 1) fail("run.eval_every", "must be >= 1");
    if (ece_bins < 1) fail("run.ece_bins", "must be >= 1");
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) fail("run.noise_rate", "must lie in [0, 1]");
    if (!(tau > 0.0)) fail("method.tau", "must be positive");
    if (interval < 1) fail("method.k", "must be >= 1");
    if (!(lsr_epsilon >= 0.0 && lsr_epsilon < 1.0)) fail("method.lsr_epsilon", "must lie in [0, 1)");
    if (!(max_entropy_lambda >= 0.0)) fail("method.max_entropy_lambda", "must be >= 0");
    if (fixed_alpha.has_value() != fixed_beta.has_value()) {
        fail("method.alpha", "alpha and beta must be fixed together");
    }
    if (fixed_alpha && (*fixed_alpha < 0.0 || *fixed_beta < 0.0)) fail("method.alpha", "weights must be >= 0");
    if (optimizer == OptimizerKind::Adam) {
        if (!(adam.lr > 0.0)) fail("optimizer.lr", "must be positive");
        if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) fail("optimizer.beta1", "must lie in [0, 1)");
        if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) fail("optimizer.beta2", "must lie in [0, 1)");
        if (!(adam.eps > 0.0)) fail("optimizer.eps", "must be positive");
    } else {
        if (!(sgd.lr > 0.0)) fail("optimizer.lr", "must be positive");
        if (!(sgd.momentum >= 0.0 && sgd.momentum < 1.0)) fail("optimizer.momentum", "must lie in [0, 1)");
        if (!(sgd.weight_decay >= 0.0)) fail("optimizer.weight_decay", "must be >= 0");
    }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finalizer over (seed, stream)
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {

std::size_t argmax_row(std::span<const double> row) {
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

Evaluation evaluate(Mlp& model, const LabeledDataset& ds) {
    if (ds.num_features != model.input_dim()) {
        throw DimensionError(fmt::format("evaluate: model expects {} features, dataset has {}", model.input_dim(),
                                         ds.num_features));
    }
    const Tensor logits = model.logits(feature_tensor(ds));
    const ProbabilityBatch probs = softmax_temperature(logits, 1.0);
    Evaluation ev;
    ev.predictions.reserve(ds.num_samples);
    ev.confidences.reserve(ds.num_samples);
    for (std::size_t i = 0; i < ds.num_samples; ++i) {
        auto p = probs.row(i);
        const std::size_t pred = argmax_row(p);
        ev.predictions.push_back(static_cast<int>(pred));
        ev.confidences.push_back(p[pred]);
        ev.correct.push_back(static_cast<int>(pred) == ds.labels[i]);
    }
    ev.accuracy = accuracy(ev.predictions, ds.labels);
    return ev;
}

TrainOutcome train_model(const TrainConfig& config, const LabeledDataset& train_ds, const LabeledDataset& test_ds,
                         const TrainHooks* hooks) {
    config.validate();
    train_ds.validate();
    test_ds.validate();
    if (train_ds.num_samples == 0 || test_ds.num_samples == 0) throw DataError("train and test splits must be nonempty");
    if (train_ds.num_features != test_ds.num_features || train_ds.num_classes != test_ds.num_classes) {
        throw DataError(fmt::format("train split has D={} C={} but test split has D={} C={}", train_ds.num_features,
                                    train_ds.num_classes, test_ds.num_features, test_ds.num_classes));
    }
    const auto start = std::chrono::steady_clock::now();

    const LabeledDataset data = config.noise_rate > 0.0
                                    ? corrupt_labels(train_ds, config.noise_rate,
                                                     derive_seed(config.seed, kCorruptionStream))
                                    : train_ds;

    std::vector<std::size_t> widths{data.num_features};
    widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
    widths.push_back(data.num_classes);
    std::mt19937_64 init_rng(derive_seed(config.seed, kInitStream));
    TrainOutcome outcome{TrainReport{}, Mlp(widths, init_rng)};
    Mlp& model = outcome.model;
    TrainReport& report = outcome.report;
    report.corrupted_ids = data.corrupted_ids;

    BatchPlan plan(config.batch_size, derive_seed(config.seed, kBatchStream));
    const bool lwr = config.method == Method::Lwr;
    std::optional<SoftLabelStore> store;
    std::optional<RetroSchedule> schedule;
    if (lwr) {
        store.emplace(data.num_samples, data.num_classes);
        schedule.emplace(config.interval, config.epochs);
        if (config.interval > config.epochs) {
            spdlog::warn("k={} exceeds M={}: no snapshot is ever committed, LWR reduces to cross-entropy",
                         config.interval, config.epochs);
        }
    }

    report.best_acc = -1.0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        if (lwr && store->has_active()) {
            const LossWeights w = config.fixed_alpha ? LossWeights{*config.fixed_alpha, *config.fixed_beta}
                                                     : schedule->alpha_beta(epoch);
            rec.alpha = w.alpha;
            rec.beta = w.beta;
        }

        double loss_sum = 0.0;
        std::size_t hits = 0;
        std::vector<Batch> batches = plan.epoch_batches(data);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const Batch& batch = batches[b];
            Tape tape;
            Var logits = model.forward(tape, tape.constant(batch.features));
            const Tensor& z = logits.value();

            StepRecord step;
            step.epoch = epoch;
            step.batch = b;
            step.alpha = rec.alpha;
            step.beta = rec.beta;

            Var loss;
            switch (config.method) {
                case Method::Std: loss = cross_entropy(logits, batch.labels); break;
                case Method::Lsr:
                    loss = lsr_loss(logits, batch.labels, config.lsr_epsilon, data.num_classes);
                    break;
                case Method::MaxEntropy:
                    loss = max_entropy_loss(logits, batch.labels, config.max_entropy_lambda);
                    break;
                case Method::Lwr: {
                    std::optional<ProbabilityBatch> soft = store->get_soft_labels(batch.ids);
                    store->record_pending(batch.ids, z, config.tau);
                    if (!soft) {
                        loss = cross_entropy(logits, batch.labels);
                        step.ce_part = loss.value().item();
                    } else {
                        LwrParts parts;
                        loss = lwr_loss(logits, batch.labels, *soft, config.tau, rec.alpha, rec.beta, &parts);
                        step.ce_part = parts.cross_entropy;
                        step.kl_part = parts.kl;
                    }
                    break;
                }
            }
            step.loss = loss.value().item();
            if (!std::isfinite(step.loss)) {
                throw NonFiniteLossError(fmt::format(
                    "non-finite loss at epoch {} batch {}: loss={} ce_part={} kl_part={} alpha={} beta={}", epoch, b,
                    step.loss, step.ce_part, step.kl_part, step.alpha, step.beta));
            }

            tape.backward(loss);
            if (config.optimizer == OptimizerKind::Adam) {
                adam_step(model.parameters(), config.adam);
            } else {
                sgd_momentum_step(model.parameters(), config.sgd);
            }

            loss_sum += step.loss * static_cast<double>(batch.ids.size());
            for (std::size_t r = 0; r < batch.ids.size(); ++r) {
                if (static_cast<int>(argmax_row(z.values().subspan(r * z.cols(), z.cols()))) == batch.labels[r]) ++hits;
            }
            report.steps.push_back(step);
        }
        rec.train_loss = loss_sum / static_cast<double>(data.num_samples);
        rec.train_acc = static_cast<double>(hits) / static_cast<double>(data.num_samples);

        if (lwr) {
            rec.committed = store->commit_if_due(epoch, config.interval);
            if (rec.committed) ++report.commits;
            if (hooks && hooks->on_epoch_end) hooks->on_epoch_end(epoch, *store);
        }

        if (epoch % config.eval_every == 0 || epoch == config.epochs) {
            const double acc = evaluate(model, test_ds).accuracy;
            rec.test_acc = acc;
            if (acc > report.best_acc) {
                report.best_acc = acc;
                report.best_epoch = epoch;
            }
            report.last_acc = acc;
        }
        report.epochs.push_back(rec);
    }

    const Evaluation final_eval = evaluate(model, test_ds);
    report.calibration = compute_ece(final_eval.confidences, final_eval.correct, config.ece_bins);
    report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return outcome;
}

TrainReport train(const TrainConfig& config, const LabeledDataset& train_ds, const LabeledDataset& test_ds) {
    return train_model(config, train_ds, test_ds).report;
}

// ---------------------------------------------------------------------------

Aggregate aggregate(std::span<const double> values) {
    Aggregate a;
    a.count = values.size();
    if (values.empty()) return a;
    double total = 0.0;
    for (double v : values) total += v;
    a.mean = total / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(sq / static_cast<double>(values.size()));
    return a;
}

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, count));
    if (jobs == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> workers;
    workers.reserve(jobs);
    for (std::size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) fn(i);
        });
    }
}

std::size_t dedupe_grid(SweepGrid& grid) {
    std::size_t dropped = 0;
    auto dedupe = [&](auto& values) {
        using T = typename std::decay_t<decltype(values)>::value_type;
        std::vector<T> kept;
        for (const T& v : values) {
            if (std::find(kept.begin(), kept.end(), v) == kept.end()) kept.push_back(v);
            else ++dropped;
        }
        values = std::move(kept);
    };
    dedupe(grid.taus);
    dedupe(grid.intervals);
    return dropped;
}

SweepResult run_sweep(const TrainConfig& base, SweepGrid grid, const std::vector<std::uint64_t>& seeds,
                      const LabeledDataset& train_ds, const LabeledDataset& test_ds, std::size_t jobs) {
    if (grid.taus.empty() || grid.intervals.empty() || seeds.empty()) {
        throw PreconditionError("run_sweep: grid and seed list must be nonempty");
    }
    if (const std::size_t dropped = dedupe_grid(grid); dropped > 0) {
        spdlog::warn("sweep grid contained {} duplicate value(s); duplicates dropped", dropped);
    }

    SweepResult result;
    for (double tau : grid.taus) {
        for (int k : grid.intervals) {
            for (std::uint64_t seed : seeds) {
                SweepRun run;
                run.config = base;
                run.config.tau = tau;
                run.config.interval = k;
                run.config.seed = seed;
                result.runs.push_back(std::move(run));
            }
        }
    }

    parallel_for(result.runs.size(), jobs, [&](std::size_t i) {
        SweepRun& run = result.runs[i];
        try {
            run.report = train(run.config, train_ds, test_ds);
        } catch (const std::exception& e) {
            run.error = e.what();
            spdlog::error("sweep run tau={} k={} seed={} failed: {}", run.config.tau, run.config.interval,
                          run.config.seed, e.what());
        }
    });

    std::size_t index = 0;
    for (double tau : grid.taus) {
        for (int k : grid.intervals) {
            SweepCell cell;
            cell.tau = tau;
            cell.interval = k;
            std::vector<double> last, best, ece;
            for (std::size_t s = 0; s < seeds.size(); ++s, ++index) {
                const SweepRun& run = result.runs[index];
                if (!run.ok()) {
                    ++cell.failures;
                    continue;
                }
                last.push_back(run.report->last_acc);
                best.push_back(run.report->best_acc);
                ece.push_back(run.report->calibration.ece);
            }
            cell.last_acc = aggregate(last);
            cell.best_acc = aggregate(best);
            cell.ece = aggregate(ece);
            result.cells.push_back(cell);
        }
    }
    return result;
}

}  // namespace retrolearn
