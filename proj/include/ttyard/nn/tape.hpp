#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttyard/tensor.hpp"

namespace ttyard::nn {

/// Trainable tensor with its gradient and optimizer state.
template <typename T>
struct Parameter {
    Parameter() = default;
    explicit Parameter(Tensor<T> init) : value(std::move(init)), grad(value.dims()) {}

    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> velocity;

    bool decay = true;          // subject to weight decay
    bool unit_interval = false;  // projected onto [0, 1] after each update

    void zero_grad() { grad.fill(T{0}); }
};

/// Handle to a value recorded on a Tape.
struct Var {
    std::size_t id = 0;
    const void* owner = nullptr;
};

/**
 * Reverse-mode tape. Each recorded value carries a closure that pushes its
 * gradient to the values it was computed from; backward() replays them in
 * reverse recording order. Parameter gradients accumulate straight into
 * Parameter::grad.
 */
template <typename T>
class Tape {
public:
    using Backward = std::function<void(Tape&, const Tensor<T>& grad_out)>;

    explicit Tape(bool training = true, bool recording = true) : training_(training), recording_(recording) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool training() const noexcept { return training_; }
    bool recording() const noexcept { return recording_; }

    /// Leaf value; its gradient is available through grad() after backward.
    Var input(Tensor<T> value);

    /// Record a computed value. `backward` may be empty for constants.
    Var push(Tensor<T> value, Backward backward);

    const Tensor<T>& value(Var v) const { return node(v).value; }

    /// Gradient of the last backward() target with respect to `v` (zeros if unreached).
    const Tensor<T>& grad(Var v);

    /// Add `g` into the gradient slot of `v`.
    void accumulate(Var v, const Tensor<T>& g);
    /// Mutable gradient slot of `v`, allocated on first use.
    Tensor<T>& grad_slot(Var v);

    /// Seeds d(loss)/d(loss) = 1 and runs every closure in reverse order.
    void backward(Var loss);

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool has_grad = false;
        Backward backward;
    };

    Node& node(Var v);
    const Node& node(Var v) const;

    bool training_;
    bool recording_;
    bool consumed_ = false;
    std::vector<Node> nodes_;
};

}  // namespace ttyard::nn
