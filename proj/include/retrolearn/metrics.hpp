#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace retrolearn {

inline constexpr std::size_t kDefaultEceBins = 15;

struct ReliabilityBin {
    double lower = 0.0;
    double upper = 0.0;
    std::size_t count = 0;
    double mean_confidence = 0.0;  // meaningless when count == 0
    double mean_accuracy = 0.0;
};

/// Equal-width bins partitioning (0, 1].
struct ReliabilityBins {
    std::vector<ReliabilityBin> bins;
    std::size_t total = 0;
};

struct EceReport {
    double ece = 0.0;
    ReliabilityBins bins;
};

/// Lower edge of bin m among `num_bins`; edge of the last bin is exactly 1.
double bin_edge(std::size_t m, std::size_t num_bins);

/// Bin index for a confidence in [0, 1]: bin m holds (edge(m), edge(m+1)];
/// 0 falls in the first bin.
std::size_t bin_index(double confidence, std::size_t num_bins);

/// ECE = sum_m |B_m| / n * |acc(B_m) - conf(B_m)| over equal-width bins.
EceReport compute_ece(std::span<const double> confidences, const std::vector<bool>& correct,
                      std::size_t num_bins = kDefaultEceBins);

/// ECE recomputed from per-bin statistics alone.
double ece_from_bins(const ReliabilityBins& bins);

/// CSV `bin_low,bin_high,count,avg_conf,avg_acc`, one row per bin (empty bins
/// leave both averages blank), then a `# ece=<value>` line.
void reliability_export(const EceReport& report, const std::filesystem::path& path);

double accuracy(std::span<const int> predictions, std::span<const int> labels);

}  // namespace retrolearn
