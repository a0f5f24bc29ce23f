#include "retrolearn/tensor.hpp"

#include "retrolearn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace retrolearn {

namespace {

std::size_t shape_product(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_positive_dims(const Shape& shape) {
    for (std::size_t d : shape) {
        if (d == 0) {
            throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape));
        }
    }
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad)
    : shape_(std::move(shape)), requires_grad_(requires_grad) {
    require_positive_dims(shape_);
    values_.assign(shape_product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : shape_(std::move(shape)), values_(std::move(values)), requires_grad_(requires_grad) {
    require_positive_dims(shape_);
    if (shape_product(shape_) != values_.size()) {
        throw DimensionError("shape " + shape_to_string(shape_) + " does not match " +
                             std::to_string(values_.size()) + " values");
    }
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor({1}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows, bool requires_grad) {
    if (rows.empty()) throw DimensionError("matrix literal needs at least one row");
    const std::size_t cols = rows.front().size();
    std::vector<double> flat;
    flat.reserve(rows.size() * cols);
    for (const auto& row : rows) {
        if (row.size() != cols) throw DimensionError("ragged matrix literal");
        flat.insert(flat.end(), row.begin(), row.end());
    }
    return Tensor({rows.size(), cols}, std::move(flat), requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values), requires_grad);
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw DimensionError("expected rank-2 tensor, got " + shape_to_string(shape_));
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw DimensionError("expected rank-2 tensor, got " + shape_to_string(shape_));
    return shape_[1];
}

double Tensor::item() const {
    if (!is_scalar()) throw ContractError("item() on non-scalar tensor " + shape_to_string(shape_));
    return values_[0];
}

std::span<double> Tensor::grad() {
    if (!grad_) throw ContractError("tensor has no gradient");
    return *grad_;
}

std::span<const double> Tensor::grad() const {
    if (!grad_) throw ContractError("tensor has no gradient");
    return *grad_;
}

void Tensor::zero_grad() {
    if (grad_) {
        std::fill(grad_->begin(), grad_->end(), 0.0);
    } else {
        grad_.emplace(values_.size(), 0.0);
    }
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------

const Tensor& Var::value() const {
    if (!tape_) throw ContractError("use of an empty Var");
    return tape_->value(*this);
}

std::size_t Tape::check(Var v) const {
    if (v.tape_ != this || v.id_ >= nodes_.size()) {
        throw ContractError("Var does not belong to this tape");
    }
    return v.id_;
}

Var Tape::leaf(Tensor& tensor) {
    Node node;
    node.tensor = &tensor;
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor tensor) {
    tensor.set_requires_grad(false);
    Node node;
    node.owned = std::make_unique<Tensor>(std::move(tensor));
    node.tensor = node.owned.get();
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor out, std::vector<Var> inputs, BackwardFn backward) {
    Node node;
    bool any_grad = false;
    node.inputs.reserve(inputs.size());
    for (Var in : inputs) {
        const std::size_t id = check(in);
        node.inputs.push_back(id);
        any_grad = any_grad || nodes_[id].tensor->requires_grad();
    }
    out.set_requires_grad(any_grad);
    node.owned = std::make_unique<Tensor>(std::move(out));
    node.tensor = node.owned.get();
    if (any_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(Var v) const { return *nodes_[check(v)].tensor; }

Tensor& Tape::mutable_tensor(Var v) { return *nodes_[check(v)].tensor; }

void Tape::backward(Var loss) {
    const std::size_t root = check(loss);
    Tensor& out = *nodes_[root].tensor;
    if (!out.is_scalar()) {
        throw ContractError("backward requires a scalar loss, got shape " + shape_to_string(out.shape()));
    }

    for (Node& node : nodes_) {
        if (node.tensor->requires_grad()) node.tensor->zero_grad();
    }
    backward_order_.clear();
    if (!out.requires_grad()) return;
    out.grad()[0] = 1.0;

    std::vector<Tensor*> inputs;
    for (std::size_t id = root + 1; id-- > 0;) {
        Node& node = nodes_[id];
        if (!node.backward) continue;
        inputs.clear();
        for (std::size_t in : node.inputs) inputs.push_back(nodes_[in].tensor);
        node.backward(*node.tensor, inputs);
        backward_order_.push_back(id);
    }
}

// ---------------------------------------------------------------------------

Var linear(Var x, Var w, Var b) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = b.value();
    if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1 || xv.cols() != wv.rows() ||
        bv.size() != wv.cols()) {
        throw DimensionError("linear: incompatible shapes x=" + shape_to_string(xv.shape()) +
                             " w=" + shape_to_string(wv.shape()) + " b=" + shape_to_string(bv.shape()));
    }
    const std::size_t batch = xv.rows();
    const std::size_t in = wv.rows();
    const std::size_t outc = wv.cols();

    Tensor out({batch, outc});
    auto o = out.values();
    auto xs = xv.values();
    auto ws = wv.values();
    auto bs = bv.values();
    for (std::size_t i = 0; i < batch; ++i) {
        double* orow = o.data() + i * outc;
        std::copy(bs.begin(), bs.end(), orow);
        for (std::size_t k = 0; k < in; ++k) {
            const double xik = xs[i * in + k];
            if (xik == 0.0) continue;
            const double* wrow = ws.data() + k * outc;
            for (std::size_t j = 0; j < outc; ++j) orow[j] += xik * wrow[j];
        }
    }

    return x.tape().record(std::move(out), {x, w, b}, [batch, in, outc](const Tensor& res, std::span<Tensor* const> ins) {
        auto g = res.grad();
        Tensor& xt = *ins[0];
        Tensor& wt = *ins[1];
        Tensor& bt = *ins[2];
        if (xt.requires_grad()) {
            auto gx = xt.grad();
            auto ws = wt.values();
            for (std::size_t i = 0; i < batch; ++i) {
                const double* grow = g.data() + i * outc;
                for (std::size_t k = 0; k < in; ++k) {
                    const double* wrow = ws.data() + k * outc;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < outc; ++j) acc += grow[j] * wrow[j];
                    gx[i * in + k] += acc;
                }
            }
        }
        if (wt.requires_grad()) {
            auto gw = wt.grad();
            auto xs = xt.values();
            for (std::size_t i = 0; i < batch; ++i) {
                const double* grow = g.data() + i * outc;
                for (std::size_t k = 0; k < in; ++k) {
                    const double xik = xs[i * in + k];
                    if (xik == 0.0) continue;
                    double* gwrow = gw.data() + k * outc;
                    for (std::size_t j = 0; j < outc; ++j) gwrow[j] += xik * grow[j];
                }
            }
        }
        if (bt.requires_grad()) {
            auto gb = bt.grad();
            for (std::size_t i = 0; i < batch; ++i) {
                for (std::size_t j = 0; j < outc; ++j) gb[j] += g[i * outc + j];
            }
        }
    });
}

Var relu(Var x) {
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    auto o = out.values();
    auto xs = xv.values();
    for (std::size_t i = 0; i < xs.size(); ++i) o[i] = xs[i] > 0.0 ? xs[i] : 0.0;
    return x.tape().record(std::move(out), {x}, [](const Tensor& res, std::span<Tensor* const> ins) {
        auto g = res.grad();
        auto xs = ins[0]->values();
        auto gx = ins[0]->grad();
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (xs[i] > 0.0) gx[i] += g[i];
        }
    });
}

Var add(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.shape() != bv.shape()) {
        throw DimensionError("add: shape mismatch " + shape_to_string(av.shape()) + " vs " +
                             shape_to_string(bv.shape()));
    }
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    return a.tape().record(std::move(out), {a, b}, [](const Tensor& res, std::span<Tensor* const> ins) {
        auto g = res.grad();
        for (Tensor* in : ins) {
            if (!in->requires_grad()) continue;
            auto gi = in->grad();
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
    });
}

Var mul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.shape() != bv.shape()) {
        throw DimensionError("mul: shape mismatch " + shape_to_string(av.shape()) + " vs " +
                             shape_to_string(bv.shape()));
    }
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    return a.tape().record(std::move(out), {a, b}, [](const Tensor& res, std::span<Tensor* const> ins) {
        auto g = res.grad();
        Tensor& at = *ins[0];
        Tensor& bt = *ins[1];
        // a and b may be the same tensor (x*x); both contributions accumulate.
        if (at.requires_grad()) {
            auto ga = at.grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bt[i];
        }
        if (bt.requires_grad()) {
            auto gb = bt.grad();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * at[i];
        }
    });
}

Var scale(Var a, double factor) {
    const Tensor& av = a.value();
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
    return a.tape().record(std::move(out), {a}, [factor](const Tensor& res, std::span<Tensor* const> ins) {
        auto g = res.grad();
        auto ga = ins[0]->grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
}

Var sum(Var a) {
    const Tensor& av = a.value();
    double total = 0.0;
    for (double v : av.values()) total += v;
    return a.tape().record(Tensor::scalar(total), {a}, [](const Tensor& res, std::span<Tensor* const> ins) {
        const double g = res.grad()[0];
        auto ga = ins[0]->grad();
        for (double& v : ga) v += g;
    });
}

}  // namespace retrolearn
