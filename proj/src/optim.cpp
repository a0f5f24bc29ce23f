#include "retrolearn/optim.hpp"

#include "retrolearn/errors.hpp"

#include <algorithm>
#include <cmath>

namespace retrolearn {

Tensor& ParameterSet::add(std::string name, Tensor tensor) {
    tensor.set_requires_grad(true);
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(tensor));
    return tensors_.back();
}

Tensor& ParameterSet::find(const std::string& name) {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == name) return tensors_[i];
    }
    throw ContractError("no parameter named '" + name + "'");
}

std::size_t ParameterSet::num_values() const noexcept {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
}

void ParameterSet::zero_grad() {
    for (auto& t : tensors_) t.zero_grad();
}

namespace {

void require_grads(const ParameterSet& params, const char* who) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) {
            throw ContractError(std::string(who) + ": parameter '" + params.name(i) + "' has no gradient");
        }
    }
}

void ensure_buffers(std::vector<std::vector<double>>& buffers, const ParameterSet& params) {
    if (buffers.size() == params.size()) return;
    buffers.clear();
    for (const auto& t : params.tensors()) buffers.emplace_back(t.size(), 0.0);
}

}  // namespace

void sgd_momentum_step(ParameterSet& params, const SgdOptions& options) {
    require_grads(params, "sgd_momentum_step");
    auto& state = params.state();
    ensure_buffers(state.velocity, params);
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto values = params[p].values();
        auto grad = params[p].grad();
        auto& v = state.velocity[p];
        for (std::size_t i = 0; i < values.size(); ++i) {
            v[i] = options.momentum * v[i] + (grad[i] + options.weight_decay * values[i]);
            values[i] -= options.lr * v[i];
        }
    }
    ++state.step;
}

void adam_step(ParameterSet& params, const AdamOptions& options) {
    require_grads(params, "adam_step");
    auto& state = params.state();
    ensure_buffers(state.first_moment, params);
    ensure_buffers(state.second_moment, params);
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(options.beta1, t);
    const double correction2 = 1.0 - std::pow(options.beta2, t);
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto values = params[p].values();
        auto grad = params[p].grad();
        auto& m = state.first_moment[p];
        auto& v = state.second_moment[p];
        for (std::size_t i = 0; i < values.size(); ++i) {
            m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * grad[i];
            v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * grad[i] * grad[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            values[i] -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
        }
    }
}

double finite_difference_check(const LossBuilder& loss, ParameterSet& params, double h, double abs_threshold) {
    if (!(h > 0.0)) throw PreconditionError("finite_difference_check: h must be positive");

    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        Var out = loss(tape, params);
        if (!out.value().is_scalar()) {
            throw ContractError("finite_difference_check: loss is not scalar, shape " +
                                shape_to_string(out.value().shape()));
        }
        tape.backward(out);
        for (auto& t : params.tensors()) {
            if (t.has_grad()) {
                auto g = t.grad();
                analytic.emplace_back(g.begin(), g.end());
            } else {
                analytic.emplace_back(t.size(), 0.0);
            }
        }
    }

    auto evaluate = [&] {
        Tape tape;
        return loss(tape, params).value().item();
    };

    double worst = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto values = params[p].values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + h;
            const double plus = evaluate();
            values[i] = saved - h;
            const double minus = evaluate();
            values[i] = saved;
            const double numeric = (plus - minus) / (2.0 * h);
            const double a = analytic[p][i];
            const double scale = std::max(std::abs(a), std::abs(numeric));
            const double diff = std::abs(a - numeric);
            const double err = scale < abs_threshold ? diff : diff / scale;
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace retrolearn
