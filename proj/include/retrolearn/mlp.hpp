#pragma once

#include "retrolearn/optim.hpp"
#include "retrolearn/tensor.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace retrolearn {

/// Fully-connected ReLU classifier: input -> hidden... -> logits.
///
/// Weights use uniform fan-in scaling U(-sqrt(6/fan_in), sqrt(6/fan_in)),
/// biases start at zero.
class Mlp {
public:
    /// `widths` = {input, hidden..., classes}; at least two entries.
    Mlp(std::vector<std::size_t> widths, std::mt19937_64& rng);

    const std::vector<std::size_t>& widths() const noexcept { return widths_; }
    std::size_t num_layers() const noexcept { return widths_.size() - 1; }
    std::size_t input_dim() const noexcept { return widths_.front(); }
    std::size_t num_classes() const noexcept { return widths_.back(); }

    ParameterSet& parameters() noexcept { return params_; }
    const ParameterSet& parameters() const noexcept { return params_; }

    Tensor& weight(std::size_t layer) { return params_[2 * layer]; }
    Tensor& bias(std::size_t layer) { return params_[2 * layer + 1]; }

    /// Records the forward pass of a [B x input] batch on `tape`.
    Var forward(Tape& tape, Var x);
    /// Logits without gradient bookkeeping.
    Tensor logits(const Tensor& x);

private:
    std::vector<std::size_t> widths_;
    ParameterSet params_;
};

}  // namespace retrolearn
