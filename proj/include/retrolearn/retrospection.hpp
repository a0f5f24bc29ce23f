#pragma once

#include "retrolearn/losses.hpp"
#include "retrolearn/tensor.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace retrolearn {

/// Per-sample soft labels with snapshot-commit semantics.
///
/// Two N x C buffers: `pending` is overwritten as samples are seen during an
/// epoch, `active` supervises training and only changes when an epoch that is
/// a multiple of k ends. Before the first commit there is no active buffer.
class SoftLabelStore {
public:
    SoftLabelStore(std::size_t num_samples, std::size_t num_classes);

    std::size_t num_samples() const noexcept { return num_samples_; }
    std::size_t num_classes() const noexcept { return num_classes_; }
    std::size_t snapshot_index() const noexcept { return snapshot_index_; }
    bool has_active() const noexcept { return has_active_; }

    /// Stores softmax(logits_row / tau) as the pending label of each id.
    /// A repeated id within one epoch overwrites the earlier row.
    void record_pending(std::span<const std::size_t> sample_ids, const Tensor& logits, double tau);

    /// Ends epoch `epoch` (1-based). When epoch % k == 0 the pending buffer
    /// becomes active and true is returned. Throws ContractError if any sample
    /// was not recorded during the epoch.
    bool commit_if_due(int epoch, int k);

    /// Active rows for `sample_ids`, or nullopt before the first commit.
    std::optional<ProbabilityBatch> get_soft_labels(std::span<const std::size_t> sample_ids) const;

    std::span<const double> active() const noexcept { return active_; }
    std::span<const double> pending() const noexcept { return pending_; }
    bool epoch_complete() const noexcept;
    std::size_t duplicate_writes() const noexcept { return duplicate_writes_; }

    /// Number of doubles held in the two label buffers (2 N C).
    std::size_t stored_values() const noexcept { return active_.size() + pending_.size(); }

    /// Writes `sample_id,p_0,...,p_{C-1}` rows of the active buffer.
    void dump_csv(const std::filesystem::path& path) const;

private:
    void check_id(std::size_t id) const;

    std::size_t num_samples_;
    std::size_t num_classes_;
    std::vector<double> active_;
    std::vector<double> pending_;
    std::vector<bool> pending_mask_;
    bool has_active_ = false;
    std::size_t snapshot_index_ = 0;
    std::size_t duplicate_writes_ = 0;
};

struct LossWeights {
    double alpha = 1.0;
    double beta = 0.0;
};

/// Linear alpha/beta schedule driven by the snapshot index i:
///   alpha = 1 - w * (i k) / M,  beta = w * (i k) / M,  w = 0.9.
struct RetroSchedule {
    int interval = 1;      // k
    int total_epochs = 1;  // M
    double warm_factor = 0.9;

    RetroSchedule(int interval, int total_epochs, double warm_factor = 0.9);

    /// Weights once `snapshots` commits have happened.
    LossWeights weights_after(int snapshots) const;
    /// Weights in force during `epoch` (1-based): the snapshot index is the
    /// number of commits completed before the epoch starts.
    LossWeights alpha_beta(int epoch) const;
    /// Commits in a run of total_epochs.
    int total_commits() const noexcept { return total_epochs / interval; }
};

}  // namespace retrolearn
