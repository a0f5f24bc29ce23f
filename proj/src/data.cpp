#include "retrolearn/data.hpp"

#include "retrolearn/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <boost/tokenizer.hpp>
#include <fmt/format.h>

namespace retrolearn {

std::string to_string(SplitTag tag) {
    switch (tag) {
        case SplitTag::Train: return "train";
        case SplitTag::Test: return "test";
        case SplitTag::Full: return "full";
    }
    return "unknown";
}

void LabeledDataset::validate() const {
    if (features.size() != num_samples * num_features) throw DataError("feature matrix size mismatch");
    if (labels.size() != num_samples || ids.size() != num_samples) throw DataError("label/id count mismatch");
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw DataError(fmt::format("label {} outside [0, {})", y, num_classes));
        }
    }
    for (double v : features) {
        if (std::isnan(v)) throw DataError("feature matrix contains NaN");
    }
}

namespace {

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

bool parse_double(const std::string& text, double& out) {
    if (text.empty()) return false;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

std::vector<std::string> split_line(const std::string& line) {
    using Separator = boost::escaped_list_separator<char>;
    boost::tokenizer<Separator> tokens(line, Separator('\\', ',', '"'));
    std::vector<std::string> cells;
    for (const auto& t : tokens) cells.push_back(trim(t));
    return cells;
}

/// Assigns dense indices to strings in first-appearance order.
struct Levels {
    std::vector<std::string> names;
    std::unordered_map<std::string, int> index;

    int intern(const std::string& s) {
        auto [it, inserted] = index.try_emplace(s, static_cast<int>(names.size()));
        if (inserted) names.push_back(s);
        return it->second;
    }
};

LabeledDataset make_subset(const LabeledDataset& ds, std::span<const std::size_t> rows, SplitTag tag) {
    LabeledDataset out;
    out.num_samples = rows.size();
    out.num_features = ds.num_features;
    out.num_classes = ds.num_classes;
    out.class_names = ds.class_names;
    out.feature_names = ds.feature_names;
    out.split = tag;
    out.features.reserve(rows.size() * ds.num_features);
    for (std::size_t r : rows) {
        auto src = ds.row(r);
        out.features.insert(out.features.end(), src.begin(), src.end());
        out.labels.push_back(ds.labels[r]);
    }
    out.ids.resize(rows.size());
    std::iota(out.ids.begin(), out.ids.end(), std::size_t{0});
    return out;
}

}  // namespace

LabeledDataset load_csv(const std::filesystem::path& path, const ColumnRef& label_column, bool has_header) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file " + path.string());

    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto cells = split_line(line);
        if (has_header && header.empty()) {
            header = std::move(cells);
            continue;
        }
        rows.push_back(std::move(cells));
        line_numbers.push_back(line_no);
    }
    if (rows.empty()) throw DataError(path.string() + ": no data rows");

    const std::size_t width = has_header ? header.size() : rows.front().size();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != width) {
            throw DataError(fmt::format("{}:{}: expected {} columns, found {}", path.string(), line_numbers[r], width,
                                        rows[r].size()));
        }
    }
    auto column_name = [&](std::size_t c) { return has_header ? header[c] : "col" + std::to_string(c); };

    std::size_t label_idx = 0;
    if (const auto* name = std::get_if<std::string>(&label_column)) {
        if (!has_header) throw DataError("label column given by name '" + *name + "' but file has no header");
        const auto it = std::find(header.begin(), header.end(), *name);
        if (it == header.end()) throw DataError(path.string() + ": no label column named '" + *name + "'");
        label_idx = static_cast<std::size_t>(it - header.begin());
    } else {
        label_idx = std::get<std::size_t>(label_column);
        if (label_idx >= width) {
            throw DataError(fmt::format("{}: label column index {} but only {} columns", path.string(), label_idx,
                                        width));
        }
    }

    LabeledDataset ds;
    ds.num_samples = rows.size();
    ds.split = SplitTag::Full;

    // Column kinds are decided by the first data row.
    std::vector<bool> numeric(width, true);
    std::vector<Levels> levels(width);
    double scratch = 0.0;
    for (std::size_t c = 0; c < width; ++c) {
        if (c != label_idx) numeric[c] = parse_double(rows.front()[c], scratch);
    }
    for (std::size_t c = 0; c < width; ++c) {
        if (c == label_idx || numeric[c]) continue;
        for (const auto& row : rows) levels[c].intern(row[c]);
    }
    for (std::size_t c = 0; c < width; ++c) {
        if (c == label_idx) continue;
        if (numeric[c]) {
            ds.feature_names.push_back(column_name(c));
        } else {
            for (const auto& level : levels[c].names) ds.feature_names.push_back(column_name(c) + "=" + level);
        }
    }
    ds.num_features = ds.feature_names.size();
    if (ds.num_features == 0) throw DataError(path.string() + ": no feature columns");

    Levels classes;
    ds.features.reserve(ds.num_samples * ds.num_features);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows[r];
        for (std::size_t c = 0; c < width; ++c) {
            if (c == label_idx) continue;
            if (numeric[c]) {
                double v = 0.0;
                if (!parse_double(row[c], v)) {
                    throw DataError(fmt::format("{}:{}: cannot parse '{}' in column '{}' as a number", path.string(),
                                                line_numbers[r], row[c], column_name(c)));
                }
                ds.features.push_back(v);
            } else {
                const int level = levels[c].index.at(row[c]);
                for (std::size_t l = 0; l < levels[c].names.size(); ++l) {
                    ds.features.push_back(static_cast<int>(l) == level ? 1.0 : 0.0);
                }
            }
        }
        if (row[label_idx].empty()) {
            throw DataError(fmt::format("{}:{}: empty label in column '{}'", path.string(), line_numbers[r],
                                        column_name(label_idx)));
        }
        ds.labels.push_back(classes.intern(row[label_idx]));
    }
    ds.class_names = std::move(classes.names);
    ds.num_classes = ds.class_names.size();
    ds.ids.resize(ds.num_samples);
    std::iota(ds.ids.begin(), ds.ids.end(), std::size_t{0});
    ds.validate();
    return ds;
}

std::pair<LabeledDataset, LabeledDataset> train_test_split(const LabeledDataset& ds, double train_fraction,
                                                           std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw PreconditionError("train fraction must lie in (0, 1)");
    }
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ds.num_samples)));
    if (n_train == 0 || n_train >= ds.num_samples) {
        throw PreconditionError(fmt::format("split of {} samples at {} leaves an empty side", ds.num_samples,
                                            train_fraction));
    }
    std::vector<std::size_t> order(ds.num_samples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::span<const std::size_t> all(order);
    return {make_subset(ds, all.first(n_train), SplitTag::Train),
            make_subset(ds, all.subspan(n_train), SplitTag::Test)};
}

NormalizationStats zscore_normalize(LabeledDataset& train, LabeledDataset& test) {
    if (train.num_samples == 0) throw PreconditionError("zscore_normalize: empty train split");
    if (test.num_features != train.num_features) throw DimensionError("zscore_normalize: feature count mismatch");
    const std::size_t d = train.num_features;
    const auto n = static_cast<double>(train.num_samples);
    NormalizationStats stats{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (std::size_t i = 0; i < train.num_samples; ++i) {
        for (std::size_t j = 0; j < d; ++j) stats.mean[j] += train.features[i * d + j];
    }
    for (double& m : stats.mean) m /= n;
    for (std::size_t i = 0; i < train.num_samples; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = train.features[i * d + j] - stats.mean[j];
            stats.stddev[j] += diff * diff;
        }
    }
    for (double& s : stats.stddev) s = std::sqrt(s / n);

    auto apply = [&](LabeledDataset& ds) {
        for (std::size_t i = 0; i < ds.num_samples; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                double& v = ds.features[i * d + j];
                v = stats.stddev[j] > 0.0 ? (v - stats.mean[j]) / stats.stddev[j] : 0.0;
            }
        }
    };
    apply(train);
    apply(test);
    return stats;
}

LabeledDataset corrupt_labels(const LabeledDataset& ds, double rate, std::uint64_t seed) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw PreconditionError(fmt::format("corruption rate {} outside [0, 1]", rate));
    LabeledDataset out = ds;
    const auto count = static_cast<std::size_t>(std::llround(rate * static_cast<double>(ds.num_samples)));
    out.corrupted_ids.clear();
    if (count == 0) return out;

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(ds.num_samples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(count);
    std::sort(order.begin(), order.end());
    std::uniform_int_distribution<int> redraw(0, static_cast<int>(ds.num_classes) - 1);
    for (std::size_t id : order) out.labels[id] = redraw(rng);
    out.corrupted_ids = std::move(order);
    return out;
}

std::pair<LabeledDataset, LabeledDataset> gaussian_blobs(std::size_t n_per_class, std::size_t num_classes,
                                                         std::size_t dims, double separation, std::uint64_t seed) {
    if (n_per_class == 0 || num_classes == 0 || dims == 0) {
        throw PreconditionError("gaussian_blobs: counts must be positive");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double radius = separation / std::sqrt(2.0);

    std::vector<double> means(num_classes * dims, 0.0);
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (num_classes <= dims) {
            means[c * dims + c] = radius;
            continue;
        }
        double norm = 0.0;
        for (std::size_t j = 0; j < dims; ++j) {
            means[c * dims + j] = normal(rng);
            norm += means[c * dims + j] * means[c * dims + j];
        }
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < dims; ++j) means[c * dims + j] *= radius / norm;
    }

    LabeledDataset full;
    full.num_samples = n_per_class * num_classes;
    full.num_features = dims;
    full.num_classes = num_classes;
    for (std::size_t c = 0; c < num_classes; ++c) full.class_names.push_back(std::to_string(c));
    for (std::size_t j = 0; j < dims; ++j) full.feature_names.push_back("x" + std::to_string(j));
    full.features.reserve(full.num_samples * dims);
    for (std::size_t c = 0; c < num_classes; ++c) {
        for (std::size_t i = 0; i < n_per_class; ++i) {
            for (std::size_t j = 0; j < dims; ++j) full.features.push_back(means[c * dims + j] + normal(rng));
            full.labels.push_back(static_cast<int>(c));
        }
    }
    full.ids.resize(full.num_samples);
    std::iota(full.ids.begin(), full.ids.end(), std::size_t{0});

    const std::size_t n_train = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n_per_class))));
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;
    std::vector<std::size_t> order(n_per_class);
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::iota(order.begin(), order.end(), c * n_per_class);
        std::shuffle(order.begin(), order.end(), rng);
        train_rows.insert(train_rows.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
        test_rows.insert(test_rows.end(), order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    }
    if (test_rows.empty()) throw PreconditionError("gaussian_blobs: too few samples per class for a test split");
    return {make_subset(full, train_rows, SplitTag::Train), make_subset(full, test_rows, SplitTag::Test)};
}

BatchPlan::BatchPlan(std::size_t batch_size, std::uint64_t seed) : batch_size_(batch_size), rng_(seed) {
    if (batch_size == 0) throw PreconditionError("batch size must be >= 1");
}

std::vector<Batch> BatchPlan::epoch_batches(const LabeledDataset& ds) {
    permutation_.resize(ds.num_samples);
    std::iota(permutation_.begin(), permutation_.end(), std::size_t{0});
    std::shuffle(permutation_.begin(), permutation_.end(), rng_);

    std::vector<Batch> batches;
    batches.reserve((ds.num_samples + batch_size_ - 1) / batch_size_);
    for (std::size_t start = 0; start < ds.num_samples; start += batch_size_) {
        const std::size_t end = std::min(start + batch_size_, ds.num_samples);
        Batch b;
        b.features = Tensor({end - start, ds.num_features});
        auto dst = b.features.values();
        for (std::size_t i = start; i < end; ++i) {
            const std::size_t row = permutation_[i];
            b.ids.push_back(ds.ids[row]);
            b.labels.push_back(ds.labels[row]);
            auto src = ds.row(row);
            std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>((i - start) * ds.num_features));
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

Tensor feature_tensor(const LabeledDataset& ds) {
    return Tensor({ds.num_samples, ds.num_features}, ds.features);
}

std::uint64_t hash_indices(std::span<const std::size_t> indices) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t idx : indices) {
        auto v = static_cast<std::uint64_t>(idx);
        for (int byte = 0; byte < 8; ++byte) {
            h ^= (v >> (8 * byte)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace retrolearn
