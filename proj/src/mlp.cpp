#include "retrolearn/mlp.hpp"

#include "retrolearn/errors.hpp"

#include <cmath>
#include <string>

namespace retrolearn {

Mlp::Mlp(std::vector<std::size_t> widths, std::mt19937_64& rng) : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw PreconditionError("Mlp needs at least input and output widths");
    for (std::size_t w : widths_) {
        if (w == 0) throw PreconditionError("Mlp layer widths must be positive");
    }
    for (std::size_t layer = 0; layer + 1 < widths_.size(); ++layer) {
        const std::size_t fan_in = widths_[layer];
        const std::size_t fan_out = widths_[layer + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Tensor w({fan_in, fan_out});
        for (double& v : w.values()) v = dist(rng);
        params_.add("fc" + std::to_string(layer) + ".weight", std::move(w));
        params_.add("fc" + std::to_string(layer) + ".bias", Tensor({fan_out}));
    }
}

Var Mlp::forward(Tape& tape, Var x) {
    if (x.value().rank() != 2 || x.value().cols() != input_dim()) {
        throw DimensionError("Mlp::forward: expected [B x " + std::to_string(input_dim()) + "] input, got " +
                             shape_to_string(x.value().shape()));
    }
    Var h = x;
    for (std::size_t layer = 0; layer < num_layers(); ++layer) {
        h = linear(h, tape.leaf(weight(layer)), tape.leaf(bias(layer)));
        if (layer + 1 < num_layers()) h = relu(h);
    }
    return h;
}

Tensor Mlp::logits(const Tensor& x) {
    Tape tape;
    Var out = forward(tape, tape.constant(x));
    Tensor result(out.value().shape(), std::vector<double>(out.value().values().begin(), out.value().values().end()));
    return result;
}

}  // namespace retrolearn
