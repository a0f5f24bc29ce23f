#include "retrolearn/metrics.hpp"

#include "retrolearn/errors.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

namespace retrolearn {

double bin_edge(std::size_t m, std::size_t num_bins) {
    return static_cast<double>(m) / static_cast<double>(num_bins);
}

std::size_t bin_index(double confidence, std::size_t num_bins) {
    if (!(confidence >= 0.0 && confidence <= 1.0)) {
        throw PreconditionError(fmt::format("confidence {} outside [0, 1]", confidence));
    }
    if (confidence == 0.0) return 0;
    // Estimate, then correct against the exact edges so that rounding in
    // confidence * num_bins never moves a boundary value to the upper bin.
    auto m = static_cast<std::size_t>(std::ceil(confidence * static_cast<double>(num_bins)));
    m = m == 0 ? 0 : m - 1;
    if (m >= num_bins) m = num_bins - 1;
    while (m > 0 && confidence <= bin_edge(m, num_bins)) --m;
    while (m + 1 < num_bins && confidence > bin_edge(m + 1, num_bins)) ++m;
    return m;
}

EceReport compute_ece(std::span<const double> confidences, const std::vector<bool>& correct, std::size_t num_bins) {
    if (confidences.size() != correct.size()) {
        throw ContractError(fmt::format("compute_ece: {} confidences but {} correctness flags", confidences.size(),
                                        correct.size()));
    }
    if (confidences.empty()) throw PreconditionError("compute_ece: no samples");
    if (num_bins == 0) throw PreconditionError("compute_ece: num_bins must be >= 1");

    EceReport report;
    report.bins.total = confidences.size();
    report.bins.bins.resize(num_bins);
    std::vector<double> conf_sum(num_bins, 0.0);
    std::vector<double> hit_sum(num_bins, 0.0);
    for (std::size_t i = 0; i < confidences.size(); ++i) {
        const std::size_t m = bin_index(confidences[i], num_bins);
        ++report.bins.bins[m].count;
        conf_sum[m] += confidences[i];
        hit_sum[m] += correct[i] ? 1.0 : 0.0;
    }
    for (std::size_t m = 0; m < num_bins; ++m) {
        auto& bin = report.bins.bins[m];
        bin.lower = bin_edge(m, num_bins);
        bin.upper = bin_edge(m + 1, num_bins);
        if (bin.count > 0) {
            bin.mean_confidence = conf_sum[m] / static_cast<double>(bin.count);
            bin.mean_accuracy = hit_sum[m] / static_cast<double>(bin.count);
        }
    }
    report.ece = ece_from_bins(report.bins);
    return report;
}

double ece_from_bins(const ReliabilityBins& bins) {
    double ece = 0.0;
    for (const auto& bin : bins.bins) {
        if (bin.count == 0) continue;
        ece += static_cast<double>(bin.count) / static_cast<double>(bins.total) *
               std::abs(bin.mean_accuracy - bin.mean_confidence);
    }
    return ece;
}

void reliability_export(const EceReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << "bin_low,bin_high,count,avg_conf,avg_acc\n";
    for (const auto& bin : report.bins.bins) {
        out << fmt::format("{},{},{},", bin.lower, bin.upper, bin.count);
        if (bin.count > 0) out << fmt::format("{},{}", bin.mean_confidence, bin.mean_accuracy);
        else out << ',';
        out << '\n';
    }
    out << fmt::format("# ece={}\n", report.ece);
    if (!out) throw DataError("failed writing " + path.string());
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size()) {
        throw ContractError(fmt::format("accuracy: {} predictions but {} labels", predictions.size(), labels.size()));
    }
    if (predictions.empty()) throw PreconditionError("accuracy: no samples");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == labels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

}  // namespace retrolearn
