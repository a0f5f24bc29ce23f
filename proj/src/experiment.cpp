#include "retrolearn/experiment.hpp"

#include "retrolearn/errors.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

namespace retrolearn {

namespace pt = boost::property_tree;

bool ExperimentConfig::has_key(const std::string& dotted) const {
    return std::find(explicit_keys.begin(), explicit_keys.end(), dotted) != explicit_keys.end();
}

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys{
        {"dataset",
         {"name", "kind", "train", "test", "label_column", "has_header", "train_fraction", "split_seed", "normalize",
          "per_class", "classes", "dims", "separation", "seed"}},
        {"model", {"hidden", "activation", "init"}},
        {"optimizer", {"name", "lr", "momentum", "weight_decay", "beta1", "beta2", "eps"}},
        {"method", {"name", "tau", "k", "lsr_epsilon", "max_entropy_lambda", "alpha", "beta"}},
        {"run", {"epochs", "batch_size", "seed", "noise_rate", "eval_every", "ece_bins"}},
    };
    return keys;
}

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

class Fields {
public:
    Fields(const pt::ptree& tree, std::string origin) : tree_(tree), origin_(std::move(origin)) {}

    std::optional<std::string> raw(const std::string& dotted) const {
        if (auto v = tree_.get_optional<std::string>(pt::ptree::path_type(dotted, '.'))) return trim(*v);
        return std::nullopt;
    }

    [[noreturn]] void fail(const std::string& dotted, const std::string& expected, const std::string& got) const {
        throw ConfigError(fmt::format("{}: field {}: expected {}, got '{}'", origin_, dotted, expected, got));
    }

    void string(const std::string& dotted, std::string& out) const {
        if (auto v = raw(dotted)) out = *v;
    }

    template <typename Int>
    void integer(const std::string& dotted, Int& out) const {
        auto v = raw(dotted);
        if (!v) return;
        Int parsed{};
        auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), parsed);
        if (ec != std::errc() || ptr != v->data() + v->size() || v->empty()) fail(dotted, "an integer", *v);
        out = parsed;
    }

    void real(const std::string& dotted, double& out) const {
        auto v = raw(dotted);
        if (!v) return;
        double parsed = 0.0;
        auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), parsed);
        if (ec != std::errc() || ptr != v->data() + v->size() || v->empty()) fail(dotted, "a number", *v);
        out = parsed;
    }

    void optional_real(const std::string& dotted, std::optional<double>& out) const {
        if (!raw(dotted)) return;
        double v = 0.0;
        real(dotted, v);
        out = v;
    }

    void boolean(const std::string& dotted, bool& out) const {
        auto v = raw(dotted);
        if (!v) return;
        std::string t = *v;
        std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (t == "true" || t == "yes" || t == "1") out = true;
        else if (t == "false" || t == "no" || t == "0") out = false;
        else fail(dotted, "true or false", *v);
    }

    void widths(const std::string& dotted, std::vector<std::size_t>& out) const {
        auto v = raw(dotted);
        if (!v) return;
        std::vector<std::size_t> parsed;
        std::stringstream ss(*v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            std::size_t w = 0;
            auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), w);
            if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
                fail(dotted, "a comma-separated list of layer widths", *v);
            }
            parsed.push_back(w);
        }
        out = std::move(parsed);
    }

private:
    const pt::ptree& tree_;
    std::string origin_;
};

void check_known(const pt::ptree& tree, const std::string& origin, std::vector<std::string>& keys) {
    for (const auto& [section, body] : tree) {
        auto it = known_keys().find(section);
        if (it == known_keys().end()) {
            if (body.empty()) throw ConfigError(fmt::format("{}: key '{}' outside of any section", origin, section));
            throw ConfigError(fmt::format("{}: unknown section [{}]", origin, section));
        }
        for (const auto& [key, value] : body) {
            if (!it->second.contains(key)) {
                throw ConfigError(fmt::format("{}: unknown field {}.{}", origin, section, key));
            }
            keys.push_back(section + "." + key);
        }
    }
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text, const std::filesystem::path& base_dir,
                                         const std::vector<std::string>& overrides, const std::string& origin) {
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(fmt::format("{}:{}: {}", origin, e.line(), e.message()));
    }

    for (const std::string& item : overrides) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + item + "' is not of the form section.key=value");
        const std::string key = trim(item.substr(0, eq));
        const auto dot = key.find('.');
        if (dot == std::string::npos || dot == 0 || dot + 1 == key.size() || key.find('.', dot + 1) != std::string::npos) {
            throw ConfigError("override key '" + key + "' must be section.key");
        }
        tree.put(pt::ptree::path_type(key, '.'), trim(item.substr(eq + 1)));
    }

    ExperimentConfig cfg;
    check_known(tree, origin, cfg.explicit_keys);
    const Fields f(tree, origin);

    DatasetSpec& ds = cfg.dataset;
    f.string("dataset.name", ds.name);
    std::string kind = "csv";
    f.string("dataset.kind", kind);
    if (kind == "csv") ds.kind = DatasetKind::Csv;
    else if (kind == "blobs") ds.kind = DatasetKind::Blobs;
    else f.fail("dataset.kind", "csv or blobs", kind);

    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };
    if (auto train = f.raw("dataset.train")) ds.train_path = resolve(*train);
    if (auto test = f.raw("dataset.test"); test && !test->empty()) ds.test_path = resolve(*test);
    if (auto label = f.raw("dataset.label_column")) {
        if (!label->empty() && std::all_of(label->begin(), label->end(), [](unsigned char c) { return std::isdigit(c); })) {
            ds.label_column = static_cast<std::size_t>(std::stoull(*label));
        } else {
            ds.label_column = *label;
        }
    }
    f.boolean("dataset.has_header", ds.has_header);
    f.real("dataset.train_fraction", ds.train_fraction);
    f.integer("dataset.split_seed", ds.split_seed);
    std::string normalize = "zscore";
    f.string("dataset.normalize", normalize);
    if (normalize == "zscore") ds.zscore = true;
    else if (normalize == "none") ds.zscore = false;
    else f.fail("dataset.normalize", "zscore or none", normalize);
    f.integer("dataset.per_class", ds.blobs_per_class);
    f.integer("dataset.classes", ds.blobs_classes);
    f.integer("dataset.dims", ds.blobs_dims);
    f.real("dataset.separation", ds.blobs_separation);
    f.integer("dataset.seed", ds.blobs_seed);
    if (ds.kind == DatasetKind::Csv && ds.train_path.empty()) {
        throw ConfigError(origin + ": field dataset.train: required for csv datasets");
    }

    TrainConfig& t = cfg.train;
    f.widths("model.hidden", t.hidden);
    f.string("model.activation", t.activation);
    f.string("model.init", t.init);

    if (auto name = f.raw("optimizer.name")) t.optimizer = parse_optimizer(*name);
    if (t.optimizer == OptimizerKind::Adam) {
        f.real("optimizer.lr", t.adam.lr);
        f.real("optimizer.beta1", t.adam.beta1);
        f.real("optimizer.beta2", t.adam.beta2);
        f.real("optimizer.eps", t.adam.eps);
    } else {
        f.real("optimizer.lr", t.sgd.lr);
        f.real("optimizer.momentum", t.sgd.momentum);
        f.real("optimizer.weight_decay", t.sgd.weight_decay);
    }

    if (auto name = f.raw("method.name")) t.method = parse_method(*name);
    f.real("method.tau", t.tau);
    f.integer("method.k", t.interval);
    f.real("method.lsr_epsilon", t.lsr_epsilon);
    f.real("method.max_entropy_lambda", t.max_entropy_lambda);
    f.optional_real("method.alpha", t.fixed_alpha);
    f.optional_real("method.beta", t.fixed_beta);

    f.integer("run.epochs", t.epochs);
    f.integer("run.batch_size", t.batch_size);
    f.integer("run.seed", t.seed);
    f.real("run.noise_rate", t.noise_rate);
    f.integer("run.eval_every", t.eval_every);
    f.integer("run.ece_bins", t.ece_bins);

    try {
        t.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": field " + e.what());
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_experiment_config(buffer.str(), path.parent_path(), overrides, path.string());
}

PreparedData prepare_data(const DatasetSpec& spec) {
    PreparedData out;
    if (spec.kind == DatasetKind::Blobs) {
        auto [train, test] = gaussian_blobs(spec.blobs_per_class, spec.blobs_classes, spec.blobs_dims,
                                            spec.blobs_separation, spec.blobs_seed);
        out.train = std::move(train);
        out.test = std::move(test);
    } else if (spec.test_path) {
        out.train = load_csv(spec.train_path, spec.label_column, spec.has_header);
        out.test = load_csv(*spec.test_path, spec.label_column, spec.has_header);
        out.train.split = SplitTag::Train;
        out.test.split = SplitTag::Test;
        if (out.train.class_names != out.test.class_names || out.train.feature_names != out.test.feature_names) {
            // Remap test labels through the train class order; categorical levels must agree.
            if (out.train.feature_names != out.test.feature_names) {
                throw DataError("train and test files produce different feature columns");
            }
            for (int& y : out.test.labels) {
                const std::string& name = out.test.class_names[static_cast<std::size_t>(y)];
                auto it = std::find(out.train.class_names.begin(), out.train.class_names.end(), name);
                if (it == out.train.class_names.end()) throw DataError("test label '" + name + "' absent from train split");
                y = static_cast<int>(it - out.train.class_names.begin());
            }
            out.test.class_names = out.train.class_names;
            out.test.num_classes = out.train.num_classes;
        }
    } else {
        const LabeledDataset full = load_csv(spec.train_path, spec.label_column, spec.has_header);
        auto [train, test] = train_test_split(full, spec.train_fraction, spec.split_seed);
        out.train = std::move(train);
        out.test = std::move(test);
    }
    if (spec.zscore) out.normalization = zscore_normalize(out.train, out.test);
    return out;
}

nlohmann::json to_json(const TrainConfig& c) {
    nlohmann::json j;
    j["model"] = {{"hidden", c.hidden}, {"activation", c.activation}, {"init", c.init}};
    if (c.optimizer == OptimizerKind::Adam) {
        j["optimizer"] = {{"name", to_string(c.optimizer)}, {"lr", c.adam.lr}, {"beta1", c.adam.beta1},
                          {"beta2", c.adam.beta2}, {"eps", c.adam.eps}};
    } else {
        j["optimizer"] = {{"name", to_string(c.optimizer)}, {"lr", c.sgd.lr}, {"momentum", c.sgd.momentum},
                          {"weight_decay", c.sgd.weight_decay}};
    }
    j["method"] = {{"name", to_string(c.method)}, {"tau", c.tau}, {"k", c.interval}, {"lsr_epsilon", c.lsr_epsilon},
                   {"max_entropy_lambda", c.max_entropy_lambda}, {"schedule_warm_factor", 0.9}};
    if (c.fixed_alpha) {
        j["method"]["alpha"] = *c.fixed_alpha;
        j["method"]["beta"] = *c.fixed_beta;
    }
    j["run"] = {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"seed", c.seed}, {"noise_rate", c.noise_rate},
                {"eval_every", c.eval_every}, {"ece_bins", c.ece_bins}};
    return j;
}

nlohmann::json to_json(const DatasetSpec& s) {
    nlohmann::json j;
    j["name"] = s.name;
    if (s.kind == DatasetKind::Blobs) {
        j["kind"] = "blobs";
        j["per_class"] = s.blobs_per_class;
        j["classes"] = s.blobs_classes;
        j["dims"] = s.blobs_dims;
        j["separation"] = s.blobs_separation;
        j["seed"] = s.blobs_seed;
        j["split"] = "per-class 80/20";
    } else {
        j["kind"] = "csv";
        j["train"] = s.train_path.string();
        if (s.test_path) j["test"] = s.test_path->string();
        else j["split"] = {{"train_fraction", s.train_fraction}, {"split_seed", s.split_seed}};
        if (const auto* name = std::get_if<std::string>(&s.label_column)) j["label_column"] = *name;
        else j["label_column"] = std::get<std::size_t>(s.label_column);
        j["has_header"] = s.has_header;
    }
    j["normalize"] = s.zscore ? "zscore" : "none";
    return j;
}

nlohmann::json describe_data(const PreparedData& data) {
    nlohmann::json j;
    j["train_rows"] = data.train.num_samples;
    j["test_rows"] = data.test.num_samples;
    j["num_features"] = data.train.num_features;
    j["num_classes"] = data.train.num_classes;
    j["class_mapping"] = nlohmann::json::array();
    for (std::size_t i = 0; i < data.train.class_names.size(); ++i) {
        j["class_mapping"].push_back({{"index", i}, {"label", data.train.class_names[i]}});
    }
    j["feature_names"] = data.train.feature_names;
    if (data.normalization) {
        j["normalization"] = {{"mean", data.normalization->mean}, {"std", data.normalization->stddev}};
    }
    return j;
}

std::string provenance_string(const TrainConfig& c) {
    std::string hidden;
    for (std::size_t i = 0; i < c.hidden.size(); ++i) hidden += (i ? "x" : "") + std::to_string(c.hidden[i]);
    std::string s = fmt::format("hidden={};activation={};init={};optimizer={}", hidden, c.activation, c.init,
                                to_string(c.optimizer));
    if (c.optimizer == OptimizerKind::Adam) {
        s += fmt::format(";lr={};beta1={};beta2={};eps={}", c.adam.lr, c.adam.beta1, c.adam.beta2, c.adam.eps);
    } else {
        s += fmt::format(";lr={};momentum={};weight_decay={}", c.sgd.lr, c.sgd.momentum, c.sgd.weight_decay);
    }
    s += fmt::format(";lsr_epsilon={};max_entropy_lambda={};eval_every={};ece_bins={}", c.lsr_epsilon,
                     c.max_entropy_lambda, c.eval_every, c.ece_bins);
    if (c.fixed_alpha) s += fmt::format(";alpha={};beta={}", *c.fixed_alpha, *c.fixed_beta);
    return s;
}

}  // namespace retrolearn
