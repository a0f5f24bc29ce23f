#include "oracles.hpp"

#include "retrolearn/errors.hpp"
#include "retrolearn/metrics.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace retrolearn;

TEST(Ece, HandComputedCase) {
    // Bin (0.6, 0.8]: confs .7 .75, acc 1/2 -> |0.5 - 0.725| * 2/4
    // Bin (0.8, 1.0]: confs .9 .95, acc 2/2 -> |1 - 0.925| * 2/4
    const std::vector<double> conf{0.7, 0.75, 0.9, 0.95};
    const std::vector<bool> ok{true, false, true, true};
    const auto rep = compute_ece(conf, ok, 5);
    EXPECT_NEAR(rep.ece, 0.5 * 0.225 + 0.5 * 0.075, 1e-15);
    EXPECT_NEAR(rep.ece, oracle::brute_force_ece(conf, ok, 5), 1e-15);
}

TEST(Ece, TwoBinHandCase) {
    // All four land in (0.5, 1]: mean conf 0.7875, accuracy 0.75.
    const std::vector<double> conf{0.6, 0.7, 0.9, 0.95};
    const std::vector<bool> ok{true, false, true, true};
    const auto rep = compute_ece(conf, ok, 2);
    EXPECT_NEAR(rep.ece, 0.0375, 1e-15);
    EXPECT_EQ(rep.bins.bins[0].count, 0u);
    EXPECT_EQ(rep.bins.bins[1].count, 4u);
}

TEST(Ece, SingleWrongSample) {
    EXPECT_NEAR(compute_ece(std::vector<double>{0.8}, std::vector<bool>{false}).ece, 0.8, 1e-15);
}

TEST(Ece, PerfectCalibrationIsZero) {
    std::vector<double> conf(10, 1.0);
    std::vector<bool> ok(10, true);
    EXPECT_EQ(compute_ece(conf, ok).ece, 0.0);
}

TEST(Ece, MatchesBruteForceOnRandomInputs) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t bins : {1u, 5u, 10u, 15u, 20u}) {
        std::vector<double> conf(500);
        std::vector<bool> ok(500);
        for (std::size_t i = 0; i < 500; ++i) {
            conf[i] = u(rng);
            ok[i] = u(rng) < conf[i];
        }
        EXPECT_NEAR(compute_ece(conf, ok, bins).ece, oracle::brute_force_ece(conf, ok, bins), 1e-12) << bins;
    }
}

TEST(Ece, BoundaryValuesGoToLowerBin) {
    // m / M lands in bin m - 1; checked for every edge of several bin counts.
    for (std::size_t bins : {3u, 10u, 15u, 20u}) {
        for (std::size_t m = 1; m <= bins; ++m) {
            const double edge = static_cast<double>(m) / static_cast<double>(bins);
            EXPECT_EQ(bin_index(edge, bins), m - 1) << m << "/" << bins;
        }
        EXPECT_EQ(bin_index(0.0, bins), 0u);
        EXPECT_EQ(bin_index(1.0, bins), bins - 1);
    }
}

TEST(Ece, BoundaryConfidencesMatchBruteForce) {
    std::vector<double> conf;
    std::vector<bool> ok;
    for (std::size_t m = 0; m <= 15; ++m) {
        conf.push_back(static_cast<double>(m) / 15.0);
        ok.push_back(m % 2 == 0);
    }
    EXPECT_NEAR(compute_ece(conf, ok, 15).ece, oracle::brute_force_ece(conf, ok, 15), 1e-15);
}

TEST(Ece, BinsPartitionSamplesAndRecombine) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> conf(200);
    std::vector<bool> ok(200);
    for (std::size_t i = 0; i < 200; ++i) {
        conf[i] = u(rng);
        ok[i] = u(rng) < 0.6;
    }
    const auto rep = compute_ece(conf, ok, 15);
    std::size_t total = 0;
    for (const auto& b : rep.bins.bins) total += b.count;
    EXPECT_EQ(total, 200u);
    EXPECT_EQ(rep.bins.bins.size(), 15u);
    EXPECT_NEAR(ece_from_bins(rep.bins), rep.ece, 1e-15);
    EXPECT_EQ(rep.bins.bins.back().upper, 1.0);
}

TEST(Ece, RejectsBadInput) {
    const std::vector<double> conf{0.5, 1.2};
    const std::vector<bool> ok{true, false};
    EXPECT_THROW(compute_ece(conf, ok), PreconditionError);
    EXPECT_THROW(compute_ece(std::vector<double>{0.5}, ok), ContractError);
    EXPECT_THROW(compute_ece(std::vector<double>{}, std::vector<bool>{}), PreconditionError);
    EXPECT_THROW(compute_ece(std::vector<double>{0.5}, std::vector<bool>{true}, 0), PreconditionError);
}

TEST(Reliability, ExportLeavesEmptyBinsBlank) {
    const std::vector<double> conf{0.95, 0.15};
    const std::vector<bool> ok{true, false};
    const auto rep = compute_ece(conf, ok, 5);
    const auto path = std::filesystem::temp_directory_path() / "retrolearn_reliability_test.csv";
    reliability_export(rep, path);
    std::ifstream in(path);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    std::filesystem::remove(path);
    ASSERT_EQ(lines.size(), 7u);
    EXPECT_EQ(lines[0], "bin_low,bin_high,count,avg_conf,avg_acc");
    EXPECT_EQ(lines[2].substr(0, lines[2].find(',', lines[2].find(',') + 1)), "0.2,0.4");
    EXPECT_EQ(lines[2].substr(lines[2].size() - 4), ",0,,");
    EXPECT_EQ(lines[6].rfind("# ece=", 0), 0u);
}

TEST(Accuracy, CountsMatches) {
    const std::vector<int> pred{0, 1, 2, 2};
    const std::vector<int> y{0, 1, 1, 2};
    EXPECT_DOUBLE_EQ(accuracy(pred, y), 0.75);
    EXPECT_THROW(accuracy(pred, std::vector<int>{0}), ContractError);
}
