#pragma once

#include "retrolearn/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace retrolearn {

enum class SplitTag { Train, Test, Full };

std::string to_string(SplitTag tag);

/// Features, integer labels and stable sample ids.
///
/// ids[i] == i for every dataset produced here; batching reorders ids, never
/// the rows they name.
struct LabeledDataset {
    std::size_t num_samples = 0;
    std::size_t num_features = 0;
    std::size_t num_classes = 0;
    std::vector<double> features;  // row-major N x D
    std::vector<int> labels;
    std::vector<std::size_t> ids;
    SplitTag split = SplitTag::Full;

    std::vector<std::string> class_names;    // index -> original label text
    std::vector<std::string> feature_names;  // after one-hot expansion
    std::vector<std::size_t> corrupted_ids;  // samples selected for relabeling, sorted

    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * num_features, num_features};
    }
    /// Throws DataError on any broken invariant (label range, NaN, sizes).
    void validate() const;
};

/// Label column given by header name or zero-based index.
using ColumnRef = std::variant<std::string, std::size_t>;

/// Loads a comma-separated file. Numeric columns become features; a column
/// whose first data cell is not numeric is treated as categorical and one-hot
/// encoded (levels in first-appearance order). Labels map to dense indices in
/// first-appearance order.
LabeledDataset load_csv(const std::filesystem::path& path, const ColumnRef& label_column, bool has_header);

/// Seeded shuffle then split: the first round(train_fraction * N) shuffled
/// rows go to train. Ids are renumbered densely within each split.
std::pair<LabeledDataset, LabeledDataset> train_test_split(const LabeledDataset& ds, double train_fraction,
                                                           std::uint64_t seed);

struct NormalizationStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // population std of the train split; 0 marks constant features
};

/// Per-feature z-scores using statistics of `train` only. Zero-variance
/// features map to 0 in both splits.
NormalizationStats zscore_normalize(LabeledDataset& train, LabeledDataset& test);

/// Redraws the labels of exactly round(rate * N) seeded-random samples
/// uniformly over all classes (a redraw may equal the original label).
LabeledDataset corrupt_labels(const LabeledDataset& ds, double rate, std::uint64_t seed);

/// C isotropic unit-variance Gaussian clusters in D dimensions, 80/20 split
/// per class. With C <= D the class means sit on scaled axes so every pair is
/// exactly `separation` apart; otherwise means are random directions at the
/// same radius.
std::pair<LabeledDataset, LabeledDataset> gaussian_blobs(std::size_t n_per_class, std::size_t num_classes,
                                                         std::size_t dims, double separation, std::uint64_t seed);

struct Batch {
    std::vector<std::size_t> ids;
    Tensor features;  // B x D
    std::vector<int> labels;
};

/// Seeded per-epoch shuffling into mini-batches of at most `batch_size`.
class BatchPlan {
public:
    BatchPlan(std::size_t batch_size, std::uint64_t seed);

    std::size_t batch_size() const noexcept { return batch_size_; }
    /// Draws a fresh permutation and cuts it into ceil(N / B) batches.
    std::vector<Batch> epoch_batches(const LabeledDataset& ds);
    /// Permutation used by the most recent epoch_batches call.
    const std::vector<std::size_t>& last_permutation() const noexcept { return permutation_; }

private:
    std::size_t batch_size_;
    std::mt19937_64 rng_;
    std::vector<std::size_t> permutation_;
};

/// Feature matrix of the whole dataset as a tensor.
Tensor feature_tensor(const LabeledDataset& ds);

/// FNV-1a over a sequence of indices; fingerprints corruption sets.
std::uint64_t hash_indices(std::span<const std::size_t> indices);

}  // namespace retrolearn
