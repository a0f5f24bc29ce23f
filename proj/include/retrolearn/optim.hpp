#pragma once

#include "retrolearn/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace retrolearn {

/// Per-parameter optimizer buffers. Buffers are allocated lazily by the first
/// step of the matching optimizer and always mirror the parameter shapes.
struct OptimizerState {
    std::vector<std::vector<double>> velocity;      // SGD momentum
    std::vector<std::vector<double>> first_moment;  // Adam m
    std::vector<std::vector<double>> second_moment; // Adam v
    std::uint64_t step = 0;
};

/// Named trainable tensors plus their optimizer state.
///
/// Tensors are stored in a vector that is only appended to during model
/// construction; a Tape may hold references to them between steps.
class ParameterSet {
public:
    Tensor& add(std::string name, Tensor tensor);

    std::size_t size() const noexcept { return tensors_.size(); }
    Tensor& operator[](std::size_t i) { return tensors_[i]; }
    const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
    const std::string& name(std::size_t i) const { return names_[i]; }
    Tensor& find(const std::string& name);

    std::vector<Tensor>& tensors() noexcept { return tensors_; }
    const std::vector<Tensor>& tensors() const noexcept { return tensors_; }

    OptimizerState& state() noexcept { return state_; }
    const OptimizerState& state() const noexcept { return state_; }

    std::size_t num_values() const noexcept;
    void zero_grad();

private:
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
    OptimizerState state_;
};

struct SgdOptions {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
};

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Classical (non-Nesterov) momentum with L2 weight decay folded into the gradient:
///   v <- momentum * v + (grad + weight_decay * param)
///   param <- param - lr * v
void sgd_momentum_step(ParameterSet& params, const SgdOptions& options);

/// Adam with bias correction:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
///   param <- param - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
void adam_step(ParameterSet& params, const AdamOptions& options);

/// Builds a scalar loss on the given tape from the parameters.
using LossBuilder = std::function<Var(Tape&, ParameterSet&)>;

/// Compares analytic gradients from one backward pass against central
/// differences (f(p+h) - f(p-h)) / 2h for every parameter coordinate.
///
/// Returns the maximum error over all coordinates. The error is relative,
/// |a - n| / max(|a|, |n|), except when both magnitudes are below
/// `abs_threshold`, where the absolute difference is used instead.
double finite_difference_check(const LossBuilder& loss, ParameterSet& params, double h,
                               double abs_threshold = 1e-6);

}  // namespace retrolearn
