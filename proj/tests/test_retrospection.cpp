#include "oracles.hpp"

#include "retrolearn/errors.hpp"
#include "retrolearn/retrospection.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>

using namespace retrolearn;

namespace {

Tensor logits_for(std::size_t n, std::size_t c, double offset) {
    Tensor t({n, c});
    for (std::size_t i = 0; i < n * c; ++i) t[i] = offset + 0.1 * static_cast<double>(i % (c + 1));
    return t;
}

void record_all(SoftLabelStore& store, double offset, double tau = 2.0) {
    std::vector<std::size_t> ids(store.num_samples());
    std::iota(ids.begin(), ids.end(), 0);
    store.record_pending(ids, logits_for(ids.size(), store.num_classes(), offset), tau);
}

}  // namespace

TEST(SoftLabelStore, EmptyBeforeFirstCommit) {
    SoftLabelStore store(4, 3);
    const std::vector<std::size_t> ids{0, 1};
    EXPECT_FALSE(store.get_soft_labels(ids).has_value());
    EXPECT_FALSE(store.has_active());
}

TEST(SoftLabelStore, RecordsSoftmaxAtTemperature) {
    SoftLabelStore store(2, 3);
    const std::vector<std::size_t> ids{1, 0};
    const Tensor z = Tensor::matrix({{1, 2, 3}, {0, 0, 4}});
    store.record_pending(ids, z, 5.0);
    ASSERT_TRUE(store.commit_if_due(1, 1));
    auto rows = store.get_soft_labels(std::vector<std::size_t>{0, 1});
    ASSERT_TRUE(rows.has_value());
    auto p0 = oracle::softmax({0, 0, 4}, 5.0);
    auto p1 = oracle::softmax({1, 2, 3}, 5.0);
    for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_NEAR(rows->row(0)[c], p0[c], 1e-15);
        EXPECT_NEAR(rows->row(1)[c], p1[c], 1e-15);
    }
}

TEST(SoftLabelStore, ActiveOnlyChangesOnMultiplesOfK) {
    SoftLabelStore store(3, 2);
    const int k = 3;
    std::vector<double> previous;
    for (int epoch = 1; epoch <= 9; ++epoch) {
        record_all(store, static_cast<double>(epoch));
        const bool committed = store.commit_if_due(epoch, k);
        EXPECT_EQ(committed, epoch % k == 0) << "epoch " << epoch;
        std::vector<double> now(store.active().begin(), store.active().end());
        if (epoch % k != 0 && !previous.empty()) EXPECT_EQ(now, previous) << "epoch " << epoch;
        if (committed) EXPECT_EQ(store.snapshot_index(), static_cast<std::size_t>(epoch / k));
        previous = now;
    }
}

TEST(SoftLabelStore, CommitUsesLatestEpochNotEarlierOnes) {
    // Epoch 1 and 2 record different logits; with k = 2 only epoch 2 survives.
    SoftLabelStore store(2, 2);
    const std::vector<std::size_t> ids{0, 1};
    store.record_pending(ids, Tensor::matrix({{5, 0}, {5, 0}}), 1.0);
    EXPECT_FALSE(store.commit_if_due(1, 2));
    store.record_pending(ids, Tensor::matrix({{0, 5}, {0, 5}}), 1.0);
    EXPECT_TRUE(store.commit_if_due(2, 2));
    auto rows = store.get_soft_labels(ids);
    EXPECT_LT(rows->row(0)[0], 0.5);
}

TEST(SoftLabelStore, IncompleteEpochIsContractError) {
    SoftLabelStore store(3, 2);
    store.record_pending(std::vector<std::size_t>{0, 2}, Tensor::matrix({{1, 0}, {0, 1}}), 1.0);
    EXPECT_FALSE(store.epoch_complete());
    try {
        store.commit_if_due(1, 1);
        FAIL() << "expected ContractError";
    } catch (const ContractError& e) {
        EXPECT_NE(std::string(e.what()).find("1 of 3"), std::string::npos) << e.what();
    }
}

TEST(SoftLabelStore, PendingMaskResetsEachEpoch) {
    SoftLabelStore store(2, 2);
    record_all(store, 0.0);
    EXPECT_FALSE(store.commit_if_due(1, 2));
    // Epoch 2 sees only one sample: still incomplete although epoch 1 saw both.
    store.record_pending(std::vector<std::size_t>{0}, Tensor::matrix({{1, 0}}), 1.0);
    EXPECT_THROW(store.commit_if_due(2, 2), ContractError);
}

TEST(SoftLabelStore, DuplicateIdOverwritesAndIsCounted) {
    SoftLabelStore store(1, 2);
    store.record_pending(std::vector<std::size_t>{0}, Tensor::matrix({{3, 0}}), 1.0);
    store.record_pending(std::vector<std::size_t>{0}, Tensor::matrix({{0, 3}}), 1.0);
    EXPECT_EQ(store.duplicate_writes(), 1u);
    store.commit_if_due(1, 1);
    EXPECT_GT(store.active()[1], store.active()[0]);
}

TEST(SoftLabelStore, RejectsOutOfRangeIdsAndShapeMismatch) {
    SoftLabelStore store(2, 2);
    EXPECT_THROW(store.record_pending(std::vector<std::size_t>{5}, Tensor::matrix({{1, 0}}), 1.0), ContractError);
    EXPECT_THROW(store.record_pending(std::vector<std::size_t>{0}, Tensor::matrix({{1, 0, 0}}), 1.0), DimensionError);
    EXPECT_THROW(store.record_pending(std::vector<std::size_t>{0, 1}, Tensor::matrix({{1, 0}}), 1.0), DimensionError);
    record_all(store, 0.0);
    store.commit_if_due(1, 1);
    EXPECT_THROW(store.get_soft_labels(std::vector<std::size_t>{2}), ContractError);
    EXPECT_THROW(SoftLabelStore(0, 2), PreconditionError);
}

TEST(SoftLabelStore, MemoryIsTwoBuffers) {
    SoftLabelStore store(100, 7);
    EXPECT_EQ(store.stored_values(), 2u * 100u * 7u);
}

TEST(SoftLabelStore, DumpCsvWritesActiveRows) {
    SoftLabelStore store(2, 3);
    record_all(store, 1.0);
    store.commit_if_due(1, 1);
    const auto path = std::filesystem::temp_directory_path() / "retrolearn_soft_labels_test.csv";
    store.dump_csv(path);
    std::ifstream in(path);
    std::string header, line;
    std::getline(in, header);
    EXPECT_EQ(header, "sample_id,p_0,p_1,p_2");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 2);
    std::filesystem::remove(path);
}

// ---------------------------------------------------------------------------

TEST(RetroSchedule, LinearRampReachesNinetyPercent) {
    RetroSchedule s(1, 10);
    auto w = s.weights_after(10);
    EXPECT_NEAR(w.beta, 0.9, 1e-15);
    EXPECT_NEAR(w.alpha, 0.1, 1e-15);
    auto w0 = s.weights_after(0);
    EXPECT_EQ(w0.alpha, 1.0);
    EXPECT_EQ(w0.beta, 0.0);
}

TEST(RetroSchedule, AlphaPlusBetaIsOne) {
    for (int k : {1, 2, 5}) {
        RetroSchedule s(k, 20);
        for (int e = 1; e <= 20; ++e) {
            auto w = s.alpha_beta(e);
            EXPECT_NEAR(w.alpha + w.beta, 1.0, 1e-15);
            EXPECT_GE(w.beta, 0.0);
            EXPECT_LE(w.beta, 0.9);
        }
    }
}

TEST(RetroSchedule, WeightsFollowCompletedSnapshots) {
    RetroSchedule s(5, 20);
    // Epochs 1..5 run before any commit; 6..10 after one commit.
    for (int e = 1; e <= 5; ++e) EXPECT_EQ(s.alpha_beta(e).beta, 0.0);
    for (int e = 6; e <= 10; ++e) EXPECT_NEAR(s.alpha_beta(e).beta, 0.9 * 5.0 / 20.0, 1e-15);
    EXPECT_NEAR(s.alpha_beta(20).beta, 0.9 * 15.0 / 20.0, 1e-15);
    EXPECT_EQ(s.total_commits(), 4);
}

TEST(RetroSchedule, RejectsInvalidArguments) {
    EXPECT_THROW(RetroSchedule(0, 10), PreconditionError);
    EXPECT_THROW(RetroSchedule(1, 0), PreconditionError);
    RetroSchedule s(2, 10);
    EXPECT_THROW(s.alpha_beta(0), PreconditionError);
    EXPECT_THROW(s.alpha_beta(11), PreconditionError);
    EXPECT_THROW(s.weights_after(6), PreconditionError);
}

TEST(RetroSchedule, IntervalLongerThanRunNeverLeavesCrossEntropy) {
    RetroSchedule s(20, 10);
    EXPECT_EQ(s.total_commits(), 0);
    for (int e = 1; e <= 10; ++e) EXPECT_EQ(s.alpha_beta(e).alpha, 1.0);
}
