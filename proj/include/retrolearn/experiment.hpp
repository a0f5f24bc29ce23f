#pragma once

#include "retrolearn/data.hpp"
#include "retrolearn/trainer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace retrolearn {

enum class DatasetKind { Csv, Blobs };

/// Where the data of an experiment comes from and how it is prepared.
struct DatasetSpec {
    std::string name = "dataset";
    DatasetKind kind = DatasetKind::Csv;

    // csv
    std::filesystem::path train_path;
    std::optional<std::filesystem::path> test_path;  // absent: seeded split of train_path
    ColumnRef label_column = std::size_t{0};
    bool has_header = true;
    double train_fraction = 0.8;
    std::uint64_t split_seed = 0;
    bool zscore = true;

    // blobs
    std::size_t blobs_per_class = 100;
    std::size_t blobs_classes = 2;
    std::size_t blobs_dims = 2;
    double blobs_separation = 4.0;
    std::uint64_t blobs_seed = 0;
};

struct ExperimentConfig {
    DatasetSpec dataset;
    TrainConfig train;
    /// Keys present in the file or overrides (dotted paths), for diagnostics.
    std::vector<std::string> explicit_keys;

    bool has_key(const std::string& dotted) const;
};

/// Parses the sectioned key=value config format. Sections: dataset, model,
/// optimizer, method, run. `overrides` are `section.key=value` strings
/// applied on top of the file. Relative dataset paths resolve against the
/// directory of the config file. Throws ConfigError with the line number for
/// syntax errors and the dotted field name for bad values or unknown keys.
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::vector<std::string>& overrides = {});

/// Same, from text; relative paths resolve against `base_dir`.
ExperimentConfig parse_experiment_config(const std::string& text, const std::filesystem::path& base_dir,
                                         const std::vector<std::string>& overrides = {},
                                         const std::string& origin = "<config>");

/// Loaded, split and normalized data plus the facts a manifest records.
struct PreparedData {
    LabeledDataset train;
    LabeledDataset test;
    std::optional<NormalizationStats> normalization;
};

PreparedData prepare_data(const DatasetSpec& spec);

nlohmann::json to_json(const TrainConfig& config);
nlohmann::json to_json(const DatasetSpec& spec);
nlohmann::json describe_data(const PreparedData& data);

/// Compact single-field rendering of every hyperparameter, `key=value;...`.
std::string provenance_string(const TrainConfig& config);

}  // namespace retrolearn
