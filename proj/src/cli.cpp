#include "retrolearn/cli.hpp"

#include "retrolearn/errors.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>

#include <boost/tokenizer.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace retrolearn {

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNonFinite = 4;

std::string timestamp_now() {
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(std::chrono::system_clock::now())));
}

std::string run_id(const TrainConfig& c, const std::string& dataset) {
    return fmt::format("{}-{}-tau{}-k{}-n{}-s{}", dataset, to_string(c.method), c.tau, c.interval, c.noise_rate, c.seed);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw DataError("failed writing " + path.string());
}

nlohmann::json base_manifest(const std::string& command, const CommonOptions& options, const ExperimentConfig& cfg,
                             const PreparedData& data, const std::string& started) {
    nlohmann::json m;
    m["tool"] = "retrolearn";
    m["version"] = kToolVersion;
    m["command"] = command;
    m["config_path"] = options.config_path.string();
    m["overrides"] = options.overrides;
    m["seed"] = cfg.train.seed;
    m["started_at"] = started;
    m["dataset"] = to_json(cfg.dataset);
    m["data"] = describe_data(data);
    m["config"] = to_json(cfg.train);
    return m;
}

nlohmann::json corruption_json(const TrainReport& report) {
    return {{"count", report.corrupted_ids.size()},
            {"indices_fnv1a64", fmt::format("{:016x}", hash_indices(report.corrupted_ids))}};
}

struct Loaded {
    ExperimentConfig cfg;
    PreparedData data;
};

/// Resolves config and loads data; on failure prints a diagnostic and sets `code`.
std::optional<Loaded> load_inputs(const CommonOptions& options, int& code) {
    Loaded loaded;
    try {
        loaded.cfg = resolve_config(options);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        code = kExitConfig;
        return std::nullopt;
    }
    try {
        loaded.data = prepare_data(loaded.cfg.dataset);
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << '\n';
        code = kExitData;
        return std::nullopt;
    }
    const TrainConfig& t = loaded.cfg.train;
    if (t.method != Method::Lwr && (loaded.cfg.has_key("method.tau") || loaded.cfg.has_key("method.k"))) {
        spdlog::warn("method {} ignores method.tau and method.k", to_string(t.method));
    }
    return loaded;
}

std::string fmt_pct(const Aggregate& a) { return fmt::format("{:.2f}±{:.2f}", 100.0 * a.mean, 100.0 * a.stddev); }

}  // namespace

// ---------------------------------------------------------------------------

ResultRow make_result_row(const TrainConfig& c, const std::string& dataset, const TrainReport& report) {
    ResultRow row;
    row.run_id = run_id(c, dataset);
    row.method = to_string(c.method);
    row.dataset = dataset;
    row.seed = c.seed;
    row.tau = c.tau;
    row.k = c.interval;
    row.epochs = c.epochs;
    row.batch = c.batch_size;
    row.noise_rate = c.noise_rate;
    row.last_acc = report.last_acc;
    row.best_acc = report.best_acc;
    row.ece = report.calibration.ece;
    row.wall_time_s = report.wall_time_s;
    row.config = provenance_string(c);
    return row;
}

ResultRow make_failed_row(const TrainConfig& c, const std::string& dataset, const std::string& error) {
    ResultRow row = make_result_row(c, dataset, TrainReport{});
    std::string status = "failed: " + error;
    for (char& ch : status) {
        if (ch == ',' || ch == '\n' || ch == '\r') ch = ' ';
    }
    row.status = status;
    return row;
}

void write_results_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path) {
    std::string text = std::string(kResultsHeader) + "\n";
    for (const auto& r : rows) {
        text += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.run_id, r.method, r.dataset, r.seed,
                            r.tau, r.k, r.epochs, r.batch, r.noise_rate, r.last_acc, r.best_acc, r.ece, r.wall_time_s,
                            r.status, r.config);
    }
    write_text(path, text);
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open results file " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kResultsHeader) {
        throw DataError(path.string() + ": not a results table (header mismatch)");
    }
    std::vector<ResultRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        boost::char_separator<char> sep(",", "", boost::keep_empty_tokens);
        for (const auto& tok : boost::tokenizer<boost::char_separator<char>>(line, sep)) cells.push_back(tok);
        if (cells.size() != 15) {
            throw DataError(fmt::format("{}:{}: expected 15 columns, found {}", path.string(), line_no, cells.size()));
        }
        try {
            ResultRow r;
            r.run_id = cells[0];
            r.method = cells[1];
            r.dataset = cells[2];
            r.seed = std::stoull(cells[3]);
            r.tau = std::stod(cells[4]);
            r.k = std::stoi(cells[5]);
            r.epochs = std::stoi(cells[6]);
            r.batch = std::stoull(cells[7]);
            r.noise_rate = std::stod(cells[8]);
            r.last_acc = std::stod(cells[9]);
            r.best_acc = std::stod(cells[10]);
            r.ece = std::stod(cells[11]);
            r.wall_time_s = std::stod(cells[12]);
            r.status = cells[13];
            r.config = cells[14];
            rows.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw DataError(fmt::format("{}:{}: malformed numeric field", path.string(), line_no));
        }
    }
    return rows;
}

void write_epoch_log(const TrainReport& report, const std::filesystem::path& path) {
    std::string text = std::string(kEpochLogHeader) + "\n";
    for (const auto& e : report.epochs) {
        text += fmt::format("{},{},{},{},{},{},{}\n", e.epoch, e.train_loss, e.train_acc,
                            e.test_acc ? fmt::format("{}", *e.test_acc) : std::string(), e.alpha, e.beta,
                            e.committed ? 1 : 0);
    }
    write_text(path, text);
}

std::vector<AggregateRow> aggregate_rows(const std::vector<ResultRow>& rows) {
    using Key = std::tuple<std::string, std::string, double, int, int, std::size_t, double>;
    std::vector<Key> order;
    std::map<Key, std::vector<const ResultRow*>> groups;
    for (const auto& r : rows) {
        Key key{r.method, r.dataset, r.tau, r.k, r.epochs, r.batch, r.noise_rate};
        auto [it, inserted] = groups.try_emplace(key);
        if (inserted) order.push_back(key);
        it->second.push_back(&r);
    }
    std::vector<AggregateRow> out;
    for (const Key& key : order) {
        AggregateRow a;
        std::tie(a.method, a.dataset, a.tau, a.k, a.epochs, a.batch, a.noise_rate) = key;
        std::vector<double> last, best, ece;
        for (const ResultRow* r : groups[key]) {
            if (r->status != "ok") {
                ++a.failures;
                continue;
            }
            last.push_back(r->last_acc);
            best.push_back(r->best_acc);
            ece.push_back(r->ece);
        }
        a.last_acc = aggregate(last);
        a.best_acc = aggregate(best);
        a.ece = aggregate(ece);
        out.push_back(a);
    }
    return out;
}

void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::filesystem::path& path) {
    std::string text = std::string(kAggregateHeader) + "\n";
    for (const auto& a : rows) {
        text += fmt::format("aggregate,{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", a.method, a.dataset, a.tau, a.k,
                            a.epochs, a.batch, a.noise_rate, a.last_acc.count, a.failures, a.last_acc.mean,
                            a.last_acc.stddev, a.best_acc.mean, a.best_acc.stddev, a.ece.mean, a.ece.stddev);
    }
    write_text(path, text);
}

void write_aggregate_text(const std::vector<AggregateRow>& rows, std::ostream& out) {
    out << fmt::format("{:<12} {:<12} {:>6} {:>4} {:>6} {:>5} {:>14} {:>14} {:>14}\n", "method", "dataset", "tau", "k",
                       "noise", "runs", "last_acc(%)", "best_acc(%)", "ece(%)");
    for (const auto& a : rows) {
        out << fmt::format("{:<12} {:<12} {:>6} {:>4} {:>6} {:>5} {:>14} {:>14} {:>14}\n", a.method, a.dataset, a.tau,
                           a.k, a.noise_rate, a.last_acc.count, fmt_pct(a.last_acc), fmt_pct(a.best_acc),
                           fmt_pct(a.ece));
    }
}

// ---------------------------------------------------------------------------

std::filesystem::path find_config(const std::filesystem::path& name) {
    if (std::filesystem::is_regular_file(name) || name.has_extension() || name.has_parent_path()) return name;
    for (const std::filesystem::path dir : {".", "configs"}) {
        const auto candidate = dir / (name.string() + ".ini");
        if (std::filesystem::is_regular_file(candidate)) return candidate;
    }
    return name;
}

ExperimentConfig resolve_config(const CommonOptions& options) {
    std::vector<std::string> overrides = options.overrides;
    if (options.method) overrides.push_back("method.name=" + *options.method);
    ExperimentConfig cfg = load_experiment_config(find_config(options.config_path), overrides);
    if (options.seed) {
        cfg.train.seed = *options.seed;
    } else if (!cfg.has_key("run.seed")) {
        if (const char* env = std::getenv(kSeedEnvVar); env && *env) {
            try {
                cfg.train.seed = std::stoull(env);
            } catch (const std::logic_error&) {
                throw ConfigError(std::string(kSeedEnvVar) + ": expected an unsigned integer, got '" + env + "'");
            }
        }
    }
    return cfg;
}

int cmd_run(const RunOptions& options) {
    const std::string started = timestamp_now();
    int code = 0;
    auto loaded = load_inputs(options, code);
    if (!loaded) return code;
    const ExperimentConfig& cfg = loaded->cfg;

    std::optional<SoftLabelStore> final_store;
    TrainHooks hooks;
    if (options.dump_soft_labels) {
        hooks.on_epoch_end = [&](int epoch, const SoftLabelStore& store) {
            if (epoch == cfg.train.epochs) final_store = store;
        };
    }

    std::optional<TrainOutcome> outcome;
    try {
        outcome.emplace(train_model(cfg.train, loaded->data.train, loaded->data.test, &hooks));
    } catch (const NonFiniteLossError& e) {
        std::cerr << "training aborted: " << e.what() << '\n';
        return kExitNonFinite;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "training failed: " << e.what() << '\n';
        return kExitFailure;
    }
    const TrainReport& report = outcome->report;

    try {
        std::filesystem::create_directories(options.out_dir);
        nlohmann::json manifest = base_manifest("run", options, cfg, loaded->data, started);
        manifest["corruption"] = corruption_json(report);
        manifest["finished_at"] = timestamp_now();
        write_text(options.out_dir / "manifest.json", manifest.dump(2) + "\n");
        write_epoch_log(report, options.out_dir / "epochs.csv");
        reliability_export(report.calibration, options.out_dir / "reliability.csv");
        write_results_csv({make_result_row(cfg.train, cfg.dataset.name, report)}, options.out_dir / "results.csv");
        if (final_store) final_store->dump_csv(options.out_dir / "soft_labels.csv");
    } catch (const std::exception& e) {
        std::cerr << "output error: " << e.what() << '\n';
        return kExitFailure;
    }
    std::cout << fmt::format("{} {} seed={} last_acc={:.4f} best_acc={:.4f} (epoch {}) ece={:.4f}\n",
                             cfg.dataset.name, to_string(cfg.train.method), cfg.train.seed, report.last_acc,
                             report.best_acc, report.best_epoch, report.calibration.ece);
    return 0;
}

int cmd_sweep(const SweepOptions& options) {
    const std::string started = timestamp_now();
    if (options.taus.empty() || options.intervals.empty()) {
        std::cerr << "sweep: --tau and --k must each list at least one value\n";
        return kExitConfig;
    }
    int code = 0;
    auto loaded = load_inputs(options, code);
    if (!loaded) return code;
    const ExperimentConfig& cfg = loaded->cfg;
    if (cfg.train.method != Method::Lwr) spdlog::warn("sweeping tau/k with method {}", to_string(cfg.train.method));

    std::vector<std::uint64_t> seeds = options.seeds;
    if (seeds.empty()) seeds.push_back(cfg.train.seed);
    SweepGrid grid{options.taus, options.intervals};
    const SweepResult sweep = run_sweep(cfg.train, grid, seeds, loaded->data.train, loaded->data.test, options.jobs);

    std::vector<ResultRow> rows;
    std::size_t succeeded = 0;
    for (const SweepRun& run : sweep.runs) {
        if (run.ok()) {
            rows.push_back(make_result_row(run.config, cfg.dataset.name, *run.report));
            ++succeeded;
        } else {
            rows.push_back(make_failed_row(run.config, cfg.dataset.name, run.error));
        }
    }
    const auto aggregates = aggregate_rows(rows);
    try {
        std::filesystem::create_directories(options.out_dir);
        write_results_csv(rows, options.out_dir / "results.csv");
        write_aggregate_csv(aggregates, options.out_dir / "aggregate.csv");
        std::ofstream text(options.out_dir / "aggregate.txt");
        write_aggregate_text(aggregates, text);
        nlohmann::json manifest = base_manifest("sweep", options, cfg, loaded->data, started);
        manifest["grid"] = {{"tau", options.taus}, {"k", options.intervals}, {"seeds", seeds}};
        manifest["finished_at"] = timestamp_now();
        write_text(options.out_dir / "manifest.json", manifest.dump(2) + "\n");
    } catch (const std::exception& e) {
        std::cerr << "output error: " << e.what() << '\n';
        return kExitFailure;
    }
    write_aggregate_text(aggregates, std::cout);
    return succeeded > 0 ? 0 : kExitFailure;
}

int cmd_robustness(const RobustnessOptions& options) {
    const std::string started = timestamp_now();
    for (double r : options.rates) {
        if (!(r >= 0.0 && r <= 1.0)) {
            std::cerr << fmt::format("robustness: noise rate {} outside [0, 1]\n", r);
            return kExitConfig;
        }
    }
    if (options.rates.empty() || options.methods.empty()) {
        std::cerr << "robustness: --rates and --methods must be nonempty\n";
        return kExitConfig;
    }
    std::vector<Method> methods;
    try {
        for (const auto& m : options.methods) methods.push_back(parse_method(m));
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    }
    int code = 0;
    auto loaded = load_inputs(options, code);
    if (!loaded) return code;
    const ExperimentConfig& cfg = loaded->cfg;
    std::vector<std::uint64_t> seeds = options.seeds;
    if (seeds.empty()) seeds.push_back(cfg.train.seed);

    std::vector<TrainConfig> configs;
    for (double rate : options.rates) {
        for (Method m : methods) {
            for (std::uint64_t seed : seeds) {
                TrainConfig c = cfg.train;
                c.method = m;
                c.noise_rate = rate;
                c.seed = seed;
                configs.push_back(c);
            }
        }
    }
    std::vector<ResultRow> rows(configs.size());
    std::vector<nlohmann::json> corruption(configs.size());
    parallel_for(configs.size(), options.jobs, [&](std::size_t i) {
        try {
            const TrainReport report = train(configs[i], loaded->data.train, loaded->data.test);
            rows[i] = make_result_row(configs[i], cfg.dataset.name, report);
            corruption[i] = corruption_json(report);
        } catch (const std::exception& e) {
            rows[i] = make_failed_row(configs[i], cfg.dataset.name, e.what());
        }
    });
    const std::size_t succeeded =
        static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const ResultRow& r) { return r.status == "ok"; }));
    const auto aggregates = aggregate_rows(rows);

    // methods x rates x {Last, Best}
    auto find = [&](const std::string& method, double rate) -> const AggregateRow* {
        for (const auto& a : aggregates) {
            if (a.method == method && a.noise_rate == rate) return &a;
        }
        return nullptr;
    };
    std::string csv = "noise_rate,accuracy";
    std::string txt = fmt::format("{:<8} {:<8}", "noise", "acc");
    for (Method m : methods) {
        csv += fmt::format(",{0}_mean,{0}_std", to_string(m));
        txt += fmt::format(" {:>16}", to_string(m));
    }
    csv += "\n";
    txt += "\n";
    for (double rate : options.rates) {
        for (const char* which : {"Last", "Best"}) {
            csv += fmt::format("{},{}", rate, which);
            txt += fmt::format("{:<8} {:<8}", fmt::format("{:.0f}%", 100.0 * rate), which);
            for (Method m : methods) {
                const AggregateRow* a = find(to_string(m), rate);
                const Aggregate agg = a ? (which[0] == 'L' ? a->last_acc : a->best_acc) : Aggregate{};
                csv += fmt::format(",{},{}", agg.mean, agg.stddev);
                txt += fmt::format(" {:>16}", fmt_pct(agg));
            }
            csv += "\n";
            txt += "\n";
        }
    }

    try {
        std::filesystem::create_directories(options.out_dir);
        write_results_csv(rows, options.out_dir / "results.csv");
        write_aggregate_csv(aggregates, options.out_dir / "aggregate.csv");
        write_text(options.out_dir / "robustness.csv", csv);
        write_text(options.out_dir / "robustness.txt", txt);
        nlohmann::json manifest = base_manifest("robustness", options, cfg, loaded->data, started);
        manifest["rates"] = options.rates;
        manifest["methods"] = options.methods;
        manifest["seeds"] = seeds;
        manifest["runs"] = nlohmann::json::array();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            manifest["runs"].push_back({{"run_id", rows[i].run_id}, {"corruption", corruption[i]}});
        }
        manifest["finished_at"] = timestamp_now();
        write_text(options.out_dir / "manifest.json", manifest.dump(2) + "\n");
    } catch (const std::exception& e) {
        std::cerr << "output error: " << e.what() << '\n';
        return kExitFailure;
    }
    std::cout << txt;
    return succeeded > 0 ? 0 : kExitFailure;
}

int cmd_report(const ReportOptions& options) {
    try {
        const auto rows = read_results_csv(options.results_path);
        const auto aggregates = aggregate_rows(rows);
        const auto dir = options.out_dir.empty() ? options.results_path.parent_path() : options.out_dir;
        if (!dir.empty()) std::filesystem::create_directories(dir);
        write_aggregate_csv(aggregates, dir / "aggregate.csv");
        std::ofstream text(dir / "aggregate.txt");
        write_aggregate_text(aggregates, text);
        write_aggregate_text(aggregates, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "report error: " << e.what() << '\n';
        return kExitData;
    }
    return 0;
}

}  // namespace retrolearn
