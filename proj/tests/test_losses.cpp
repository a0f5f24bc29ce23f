#include "oracles.hpp"

#include "retrolearn/errors.hpp"
#include "retrolearn/losses.hpp"
#include "retrolearn/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace retrolearn;

namespace {

// Reference values computed with 30-digit arithmetic.
constexpr double kSoftmaxTau2[2] = {0.731058578630004879, 0.268941421369995121};
constexpr double kCe123 = 0.407605964444380304;
constexpr double kLwrTwoClass = 0.158761478100811907;
constexpr double kLwrTwoClassCe = 0.313261687518222834;
constexpr double kLwrTwoClassKl = 0.00106531717085024488;
constexpr double kMaxEnt = 0.255041376629401039;

std::vector<double> logits_grad(const std::function<Var(Var)>& loss, const Tensor& z) {
    Tensor leaf = z;
    leaf.set_requires_grad(true);
    Tape tape;
    tape.backward(loss(tape.leaf(leaf)));
    return {leaf.grad().begin(), leaf.grad().end()};
}

double loss_value(const std::function<Var(Var)>& loss, const Tensor& z) {
    Tape tape;
    return loss(tape.constant(z)).value().item();
}

/// Max relative error between the analytic logits gradient and central differences.
double logits_gradcheck(const std::function<Var(Var)>& loss, const Tensor& z, double h = 1e-5) {
    ParameterSet ps;
    ps.add("z", z);
    return finite_difference_check([&](Tape& tape, ParameterSet& p) { return loss(tape.leaf(p[0])); }, ps, h);
}

Tensor random_batch(std::mt19937_64& rng, std::size_t b, std::size_t c) {
    Tensor t({b, c});
    auto z = oracle::random_logits(rng, b * c, 2.0);
    std::copy(z.begin(), z.end(), t.values().begin());
    return t;
}

ProbabilityBatch random_probs(std::mt19937_64& rng, std::size_t b, std::size_t c) {
    std::vector<double> all;
    for (std::size_t i = 0; i < b; ++i) {
        auto p = oracle::softmax(oracle::random_logits(rng, c, 1.5));
        all.insert(all.end(), p.begin(), p.end());
    }
    return ProbabilityBatch(b, c, all);
}

}  // namespace

// ---------------------------------------------------------------------------
// softmax / entropy / KL

TEST(Softmax, TemperatureTwoReference) {
    auto p = softmax_temperature(Tensor::matrix({{2, 0}}), 2.0);
    EXPECT_NEAR(p.row(0)[0], kSoftmaxTau2[0], 1e-15);
    EXPECT_NEAR(p.row(0)[1], kSoftmaxTau2[1], 1e-15);
}

TEST(Softmax, RowsAreDistributionsAndTemperatureFlattens) {
    std::mt19937_64 rng(7);
    Tensor z = random_batch(rng, 6, 5);
    for (double tau : {0.5, 1.0, 2.0, 5.0, 10.0}) {
        auto p = softmax_temperature(z, tau);
        EXPECT_NO_THROW(p.validate(1e-12));
        for (std::size_t r = 0; r < 6; ++r) {
            std::vector<double> zr(z.values().begin() + r * 5, z.values().begin() + r * 5 + 5);
            auto ref = oracle::softmax(zr, tau);
            for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(p.row(r)[c], ref[c], 1e-14);
        }
    }
    auto sharp = softmax_temperature(z, 1.0);
    auto flat = softmax_temperature(z, 10.0);
    for (std::size_t r = 0; r < 6; ++r) EXPECT_GT(entropy(flat.row(r)), entropy(sharp.row(r)));
}

TEST(Softmax, LargeLogitsStayFinite) {
    auto p = softmax_temperature(Tensor::matrix({{1000, 0, -1000}}), 1.0);
    EXPECT_DOUBLE_EQ(p.row(0)[0], 1.0);
    EXPECT_EQ(p.row(0)[2], 0.0);
}

TEST(Entropy, UniformAndOneHot) {
    std::vector<double> u(4, 0.25);
    EXPECT_NEAR(entropy(u), std::log(4.0), 1e-15);
    std::vector<double> one{0, 1, 0};
    EXPECT_EQ(entropy(one), 0.0);
}

TEST(Kl, OneHotAgainstUniformIsLogTwo) {
    ProbabilityBatch p(1, 2, {1.0, 0.0});
    ProbabilityBatch q(1, 2, {0.5, 0.5});
    EXPECT_NEAR(kl_divergence(p, q), std::log(2.0), 1e-15);
}

TEST(Kl, SelfIsZeroAndShapesMustMatch) {
    ProbabilityBatch p(2, 3, {0.2, 0.3, 0.5, 0.1, 0.1, 0.8});
    EXPECT_NEAR(kl_divergence(p, p), 0.0, 1e-15);
    EXPECT_THROW(kl_divergence(p, ProbabilityBatch::uniform(2, 2)), DimensionError);
}

TEST(Kl, ZeroInQIsFloored) {
    ProbabilityBatch p(1, 2, {0.5, 0.5});
    ProbabilityBatch q(1, 2, {1.0, 0.0});
    const double kl = kl_divergence(p, q);
    EXPECT_TRUE(std::isfinite(kl));
    EXPECT_NEAR(kl, 0.5 * std::log(0.5) + 0.5 * std::log(0.5 / kProbabilityFloor), 1e-9);
}

TEST(ProbabilityBatchTest, ValidateRejectsBadRows) {
    EXPECT_THROW(ProbabilityBatch(1, 2, {0.7, 0.7}).validate(), ContractError);
    EXPECT_THROW(ProbabilityBatch(1, 2, {1.5, -0.5}).validate(), ContractError);
    EXPECT_THROW(ProbabilityBatch(2, 2, {0.5, 0.5}), DimensionError);
    EXPECT_NO_THROW(ProbabilityBatch::uniform(3, 4).validate());
}

// ---------------------------------------------------------------------------
// cross-entropy

TEST(CrossEntropy, Reference) {
    const std::vector<int> y{2};
    EXPECT_NEAR(loss_value([&](Var z) { return cross_entropy(z, y); }, Tensor::matrix({{1, 2, 3}})), kCe123, 1e-14);
}

TEST(CrossEntropy, GradientIsSoftmaxMinusOneHotOverBatch) {
    std::mt19937_64 rng(2);
    Tensor z = random_batch(rng, 4, 3);
    const std::vector<int> y{0, 2, 1, 1};
    auto g = logits_grad([&](Var v) { return cross_entropy(v, y); }, z);
    for (std::size_t r = 0; r < 4; ++r) {
        auto p = oracle::softmax({z.at(r, 0), z.at(r, 1), z.at(r, 2)});
        for (std::size_t c = 0; c < 3; ++c) {
            const double target = static_cast<int>(c) == y[r] ? 1.0 : 0.0;
            EXPECT_NEAR(g[r * 3 + c], (p[c] - target) / 4.0, 1e-14);
        }
    }
    EXPECT_LT(logits_gradcheck([&](Var v) { return cross_entropy(v, y); }, z), 1e-6);
}

TEST(CrossEntropy, LabelOutOfRangeAndBatchMismatch) {
    const std::vector<int> bad{3};
    EXPECT_THROW(loss_value([&](Var z) { return cross_entropy(z, bad); }, Tensor::matrix({{1, 2, 3}})),
                 ContractError);
    const std::vector<int> two{0, 1};
    EXPECT_THROW(loss_value([&](Var z) { return cross_entropy(z, two); }, Tensor::matrix({{1, 2, 3}})),
                 DimensionError);
}

TEST(CrossEntropy, ExtremeLogitsStayFinite) {
    const std::vector<int> y{1};
    const double v = loss_value([&](Var z) { return cross_entropy(z, y); }, Tensor::matrix({{800, -800}}));
    EXPECT_NEAR(v, 1600.0, 1e-9);
}

// ---------------------------------------------------------------------------
// softened KL and the retrospection loss

TEST(SoftenedKl, ZeroWhenStoredMatchesStudent) {
    const Tensor z = Tensor::matrix({{0.3, -1.2, 2.0}});
    auto stored = softmax_temperature(z, 4.0);
    EXPECT_NEAR(loss_value([&](Var v) { return softened_kl(v, stored, 4.0); }, z), 0.0, 1e-15);
    auto g = logits_grad([&](Var v) { return softened_kl(v, stored, 4.0); }, z);
    for (double x : g) EXPECT_NEAR(x, 0.0, 1e-15);
}

TEST(SoftenedKl, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(9);
    for (double tau : {1.0, 2.0, 5.0, 10.0}) {
        Tensor z = random_batch(rng, 5, 4);
        auto stored = random_probs(rng, 5, 4);
        EXPECT_LT(logits_gradcheck([&](Var v) { return softened_kl(v, stored, tau); }, z), 1e-5) << "tau=" << tau;
    }
}

TEST(Lwr, TwoClassReference) {
    const Tensor z = Tensor::matrix({{1, 0}});
    const std::vector<int> y{0};
    ProbabilityBatch stored(1, 2, {0.6, 0.4});
    LwrParts parts;
    const double v = loss_value([&](Var v) { return lwr_loss(v, y, stored, 2.0, 0.5, 0.5, &parts); }, z);
    EXPECT_NEAR(v, kLwrTwoClass, 1e-14);
    EXPECT_NEAR(parts.cross_entropy, kLwrTwoClassCe, 1e-14);
    EXPECT_NEAR(parts.kl, kLwrTwoClassKl, 1e-15);
    EXPECT_NEAR(parts.total, v, 1e-15);
}

TEST(Lwr, AlphaOneBetaZeroEqualsCrossEntropy) {
    std::mt19937_64 rng(4);
    Tensor z = random_batch(rng, 6, 3);
    const std::vector<int> y{0, 1, 2, 2, 1, 0};
    auto stored = random_probs(rng, 6, 3);
    const double lwr = loss_value([&](Var v) { return lwr_loss(v, y, stored, 5.0, 1.0, 0.0); }, z);
    const double ce = loss_value([&](Var v) { return cross_entropy(v, y); }, z);
    EXPECT_NEAR(lwr, ce, 1e-14);
}

TEST(Lwr, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(21);
    for (double tau : {2.0, 5.0, 10.0}) {
        Tensor z = random_batch(rng, 4, 5);
        const std::vector<int> y{4, 0, 3, 1};
        auto stored = random_probs(rng, 4, 5);
        EXPECT_LT(logits_gradcheck([&](Var v) { return lwr_loss(v, y, stored, tau, 0.4, 0.6); }, z), 1e-5)
            << "tau=" << tau;
    }
}

TEST(Lwr, UniformStoredAtUnitTemperatureMatchesLabelSmoothingGradient) {
    // alpha CE + beta KL(u || softmax z) has gradient p - (alpha y + beta u),
    // the smoothed-label gradient with eps = beta when alpha + beta = 1.
    std::mt19937_64 rng(13);
    const std::size_t b = 5, c = 4;
    Tensor z = random_batch(rng, b, c);
    const std::vector<int> y{1, 3, 0, 2, 1};
    const double eps = 0.3;
    auto g_lwr = logits_grad(
        [&](Var v) { return lwr_loss(v, y, ProbabilityBatch::uniform(b, c), 1.0, 1.0 - eps, eps); }, z);
    auto g_lsr = logits_grad([&](Var v) { return lsr_loss(v, y, eps, c); }, z);
    for (std::size_t i = 0; i < b * c; ++i) EXPECT_NEAR(g_lwr[i], g_lsr[i], 1e-12);
}

TEST(Lwr, RejectsBadTemperatureAndStoredShape) {
    const Tensor z = Tensor::matrix({{1, 0}});
    const std::vector<int> y{0};
    ProbabilityBatch stored(1, 2, {0.6, 0.4});
    EXPECT_THROW(loss_value([&](Var v) { return lwr_loss(v, y, stored, 0.0, 0.5, 0.5); }, z), PreconditionError);
    EXPECT_THROW(loss_value([&](Var v) { return lwr_loss(v, y, ProbabilityBatch::uniform(2, 2), 2, 0.5, 0.5); }, z),
                 ContractError);
}

// ---------------------------------------------------------------------------
// label smoothing and maximum entropy

TEST(Lsr, EpsilonZeroIsCrossEntropy) {
    std::mt19937_64 rng(6);
    Tensor z = random_batch(rng, 3, 4);
    const std::vector<int> y{3, 1, 0};
    EXPECT_NEAR(loss_value([&](Var v) { return lsr_loss(v, y, 0.0, 4); }, z),
                loss_value([&](Var v) { return cross_entropy(v, y); }, z), 1e-14);
}

TEST(Lsr, GradientIsSoftmaxMinusSmoothedTarget) {
    std::mt19937_64 rng(8);
    const std::size_t b = 3, c = 4;
    Tensor z = random_batch(rng, b, c);
    const std::vector<int> y{2, 0, 3};
    const double eps = 0.1;
    auto g = logits_grad([&](Var v) { return lsr_loss(v, y, eps, c); }, z);
    for (std::size_t r = 0; r < b; ++r) {
        auto p = oracle::softmax({z.at(r, 0), z.at(r, 1), z.at(r, 2), z.at(r, 3)});
        for (std::size_t k = 0; k < c; ++k) {
            const double target = (1 - eps) * (static_cast<int>(k) == y[r] ? 1.0 : 0.0) + eps / c;
            EXPECT_NEAR(g[r * c + k], (p[k] - target) / b, 1e-14);
        }
    }
    EXPECT_LT(logits_gradcheck([&](Var v) { return lsr_loss(v, y, eps, c); }, z), 1e-6);
}

TEST(Lsr, RejectsEpsilonOutsideUnitInterval) {
    const std::vector<int> y{0};
    EXPECT_THROW(loss_value([&](Var v) { return lsr_loss(v, y, 1.5, 2); }, Tensor::matrix({{1, 0}})),
                 PreconditionError);
    EXPECT_THROW(loss_value([&](Var v) { return lsr_loss(v, y, -0.1, 2); }, Tensor::matrix({{1, 0}})),
                 PreconditionError);
}

TEST(MaxEntropy, Reference) {
    const std::vector<int> y{0};
    EXPECT_NEAR(loss_value([&](Var v) { return max_entropy_loss(v, y, 0.1); }, Tensor::matrix({{1, 0}})), kMaxEnt,
                1e-14);
}

TEST(MaxEntropy, LambdaZeroIsCrossEntropyAndGradcheck) {
    std::mt19937_64 rng(10);
    Tensor z = random_batch(rng, 4, 3);
    const std::vector<int> y{0, 0, 2, 1};
    EXPECT_NEAR(loss_value([&](Var v) { return max_entropy_loss(v, y, 0.0); }, z),
                loss_value([&](Var v) { return cross_entropy(v, y); }, z), 1e-14);
    EXPECT_LT(logits_gradcheck([&](Var v) { return max_entropy_loss(v, y, 0.3); }, z), 1e-5);
}

TEST(MaxEntropy, PenaltyLowersLossForConfidentPredictions) {
    const std::vector<int> y{0};
    const Tensor z = Tensor::matrix({{2, -1, 0.5}});
    auto p = oracle::softmax({2, -1, 0.5});
    const double ce = loss_value([&](Var v) { return cross_entropy(v, y); }, z);
    EXPECT_NEAR(loss_value([&](Var v) { return max_entropy_loss(v, y, 0.2); }, z), ce - 0.2 * oracle::entropy(p),
                1e-14);
}
