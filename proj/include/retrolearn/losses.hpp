#pragma once

#include "retrolearn/tensor.hpp"

#include <span>
#include <vector>

namespace retrolearn {

/// Floor applied to stored soft-label entries inside logarithms.
inline constexpr double kProbabilityFloor = 1e-12;

/// A batch of probability vectors, one row per sample.
class ProbabilityBatch {
public:
    ProbabilityBatch() = default;
    ProbabilityBatch(std::size_t rows, std::size_t cols);
    ProbabilityBatch(std::size_t rows, std::size_t cols, std::vector<double> probs);

    static ProbabilityBatch uniform(std::size_t rows, std::size_t cols);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::span<double> row(std::size_t r) { return {probs_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {probs_.data() + r * cols_, cols_}; }
    std::span<const double> values() const noexcept { return probs_; }

    /// Throws ContractError unless every row is in [0,1] and sums to 1 within `tol`.
    void validate(double tol = 1e-9) const;

    bool operator==(const ProbabilityBatch&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> probs_;
};

/// Row-wise softmax of logits / tau, with max subtraction.
ProbabilityBatch softmax_temperature(const Tensor& logits, double tau);

/// Shannon entropy in nats, 0 log 0 = 0.
double entropy(std::span<const double> p);

/// Batch mean of KL(p_i || q_i) = sum_c p log(p / q). Entries of q are floored
/// at kProbabilityFloor; entries where p is 0 contribute nothing.
double kl_divergence(const ProbabilityBatch& p, const ProbabilityBatch& q);

/// Batch mean of -log softmax(z)[y], via log-sum-exp.
Var cross_entropy(Var logits, std::span<const int> labels);

/// Batch mean of KL(stored_i || softmax(z_i / tau)). `stored` is a constant:
/// the gradient flows into the logits only.
Var softened_kl(Var logits, const ProbabilityBatch& stored, double tau);

/// Decomposition of one retrospection loss evaluation.
struct LwrParts {
    double cross_entropy = 0.0;
    double kl = 0.0;
    double total = 0.0;
};

/// alpha * CE(z, y) + beta * tau^2 * KL(stored || softmax(z / tau)).
Var lwr_loss(Var logits, std::span<const int> labels, const ProbabilityBatch& stored, double tau,
             double alpha, double beta, LwrParts* parts = nullptr);

/// Cross-entropy against the smoothed target (1 - eps) y + eps / C.
Var lsr_loss(Var logits, std::span<const int> labels, double epsilon, std::size_t num_classes);

/// CE(z, y) - lambda * entropy(softmax(z)), batch mean.
Var max_entropy_loss(Var logits, std::span<const int> labels, double lambda);

}  // namespace retrolearn
