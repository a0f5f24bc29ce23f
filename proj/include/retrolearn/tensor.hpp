#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace retrolearn {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// Invariants: product(shape) == values().size(); grad, when present, has the
/// same length as values.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor scalar(double value, bool requires_grad = false);
    /// Convenience for tests and small literals: a 2-D tensor from nested rows.
    static Tensor matrix(const std::vector<std::vector<double>>& rows, bool requires_grad = false);
    static Tensor vector(std::vector<double> values, bool requires_grad = false);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return values_.size(); }
    bool is_scalar() const noexcept { return values_.size() == 1; }

    /// Rows/cols of a rank-2 tensor. Throws DimensionError for other ranks.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    double item() const;

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& at(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }

    bool requires_grad() const noexcept { return requires_grad_; }
    void set_requires_grad(bool flag) noexcept { requires_grad_ = flag; }

    bool has_grad() const noexcept { return grad_.has_value(); }
    std::span<double> grad();
    std::span<const double> grad() const;
    /// Allocates (if needed) and fills the gradient with zeros.
    void zero_grad();
    void clear_grad() noexcept { grad_.reset(); }

    bool all_finite() const noexcept;

private:
    Shape shape_;
    std::vector<double> values_;
    bool requires_grad_ = false;
    std::optional<std::vector<double>> grad_;
};

class Tape;

/// Handle to a tensor recorded on a Tape.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    Tape& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Ordered record of executed operations for reverse-mode differentiation.
///
/// Leaves registered with `leaf` are referenced, not copied: the caller keeps
/// them alive and unmoved for the lifetime of the tape. `backward` zeroes the
/// grads of every requires_grad tensor on the tape before propagating, so a
/// second call on the same tape reproduces the first instead of accumulating.
class Tape {
public:
    /// Receives the op output (with its populated grad) and the op inputs.
    /// Implementations accumulate into inputs whose requires_grad() is set.
    using BackwardFn = std::function<void(const Tensor& out, std::span<Tensor* const> inputs)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor& tensor);
    Var constant(Tensor tensor);
    /// Records an op output. Output requires_grad is set when any input requires it.
    Var record(Tensor out, std::vector<Var> inputs, BackwardFn backward);

    void backward(Var loss);

    const Tensor& value(Var v) const;
    Tensor& mutable_tensor(Var v);
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Ids of nodes in the order their backward functions ran during the last
    /// backward pass. Exposed for tests of traversal order.
    const std::vector<std::size_t>& last_backward_order() const noexcept { return backward_order_; }

private:
    struct Node {
        Tensor* tensor = nullptr;
        std::unique_ptr<Tensor> owned;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
    };

    std::size_t check(Var v) const;

    std::vector<Node> nodes_;
    std::vector<std::size_t> backward_order_;
};

// ---------------------------------------------------------------------------
// Differentiable primitives.
// ---------------------------------------------------------------------------

/// out[i,j] = sum_k x[i,k] w[k,j] + b[j]
Var linear(Var x, Var w, Var b);
/// max(0, x); gradient at exactly 0 is 0.
Var relu(Var x);
Var add(Var a, Var b);
/// Elementwise product of equal-shape tensors.
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// Sum of all elements to a scalar.
Var sum(Var a);

}  // namespace retrolearn
