#include "retrolearn/retrospection.hpp"

#include "retrolearn/errors.hpp"

#include <algorithm>
#include <fstream>
#include <string>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace retrolearn {

SoftLabelStore::SoftLabelStore(std::size_t num_samples, std::size_t num_classes)
    : num_samples_(num_samples),
      num_classes_(num_classes),
      active_(num_samples * num_classes, 0.0),
      pending_(num_samples * num_classes, 0.0),
      pending_mask_(num_samples, false) {
    if (num_samples == 0 || num_classes == 0) {
        throw PreconditionError("SoftLabelStore needs at least one sample and one class");
    }
}

void SoftLabelStore::check_id(std::size_t id) const {
    if (id >= num_samples_) {
        throw ContractError(fmt::format("sample id {} out of range for store of {} samples", id, num_samples_));
    }
}

void SoftLabelStore::record_pending(std::span<const std::size_t> sample_ids, const Tensor& logits, double tau) {
    if (logits.rank() != 2 || logits.rows() != sample_ids.size() || logits.cols() != num_classes_) {
        throw DimensionError(fmt::format("record_pending: {} ids with logits {} (store has {} classes)",
                                         sample_ids.size(), shape_to_string(logits.shape()), num_classes_));
    }
    for (std::size_t id : sample_ids) check_id(id);
    const ProbabilityBatch soft = softmax_temperature(logits, tau);
    for (std::size_t r = 0; r < sample_ids.size(); ++r) {
        const std::size_t id = sample_ids[r];
        if (pending_mask_[id]) {
            ++duplicate_writes_;
            spdlog::warn("soft label for sample {} recorded twice in one epoch; keeping the latest", id);
        }
        auto src = soft.row(r);
        std::copy(src.begin(), src.end(), pending_.begin() + static_cast<std::ptrdiff_t>(id * num_classes_));
        pending_mask_[id] = true;
    }
}

bool SoftLabelStore::epoch_complete() const noexcept {
    return std::all_of(pending_mask_.begin(), pending_mask_.end(), [](bool seen) { return seen; });
}

bool SoftLabelStore::commit_if_due(int epoch, int k) {
    if (epoch < 1) throw PreconditionError("commit_if_due: epoch must be >= 1");
    if (k < 1) throw PreconditionError("commit_if_due: interval k must be >= 1");
    if (!epoch_complete()) {
        const auto missing = static_cast<std::size_t>(std::count(pending_mask_.begin(), pending_mask_.end(), false));
        throw ContractError(fmt::format("epoch {} ended with {} of {} samples unrecorded", epoch, missing,
                                        num_samples_));
    }
    std::fill(pending_mask_.begin(), pending_mask_.end(), false);
    if (epoch % k != 0) return false;
    std::swap(active_, pending_);
    has_active_ = true;
    ++snapshot_index_;
    return true;
}

std::optional<ProbabilityBatch> SoftLabelStore::get_soft_labels(std::span<const std::size_t> sample_ids) const {
    for (std::size_t id : sample_ids) check_id(id);
    if (!has_active_) return std::nullopt;
    std::vector<double> rows;
    rows.reserve(sample_ids.size() * num_classes_);
    for (std::size_t id : sample_ids) {
        const auto begin = active_.begin() + static_cast<std::ptrdiff_t>(id * num_classes_);
        rows.insert(rows.end(), begin, begin + static_cast<std::ptrdiff_t>(num_classes_));
    }
    return ProbabilityBatch(sample_ids.size(), num_classes_, std::move(rows));
}

void SoftLabelStore::dump_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << "sample_id";
    for (std::size_t c = 0; c < num_classes_; ++c) out << ",p_" << c;
    out << '\n';
    if (has_active_) {
        for (std::size_t id = 0; id < num_samples_; ++id) {
            out << id;
            for (std::size_t c = 0; c < num_classes_; ++c) out << ',' << fmt::format("{}", active_[id * num_classes_ + c]);
            out << '\n';
        }
    }
    if (!out) throw DataError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------

RetroSchedule::RetroSchedule(int interval_k, int epochs, double warm)
    : interval(interval_k), total_epochs(epochs), warm_factor(warm) {
    if (interval < 1) throw PreconditionError("retrospection interval k must be >= 1");
    if (total_epochs < 1) throw PreconditionError("total epochs M must be >= 1");
}

LossWeights RetroSchedule::weights_after(int snapshots) const {
    if (snapshots < 0 || static_cast<long>(snapshots) * interval > total_epochs) {
        throw PreconditionError(fmt::format("snapshot index {} impossible with k={} M={}", snapshots, interval,
                                            total_epochs));
    }
    const double beta = warm_factor * static_cast<double>(snapshots * interval) / static_cast<double>(total_epochs);
    return {1.0 - beta, beta};
}

LossWeights RetroSchedule::alpha_beta(int epoch) const {
    if (epoch < 1 || epoch > total_epochs) {
        throw PreconditionError(fmt::format("epoch {} outside [1, {}]", epoch, total_epochs));
    }
    return weights_after((epoch - 1) / interval);
}

}  // namespace retrolearn
