#include "ttyard/nn/tape.hpp"

namespace ttyard::nn {

template <typename T>
typename Tape<T>::Node& Tape<T>::node(Var v) {
    if (v.owner != this || v.id >= nodes_.size()) throw std::invalid_argument("variable does not belong to this tape");
    return nodes_[v.id];
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
    if (v.owner != this || v.id >= nodes_.size()) throw std::invalid_argument("variable does not belong to this tape");
    return nodes_[v.id];
}

template <typename T>
Var Tape<T>::input(Tensor<T> value) {
    return push(std::move(value), {});
}

template <typename T>
Var Tape<T>::push(Tensor<T> value, Backward backward) {
    Node n;
    n.value = std::move(value);
    if (recording_) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1, this};
}

template <typename T>
Tensor<T>& Tape<T>::grad_slot(Var v) {
    Node& n = node(v);
    if (!n.has_grad) {
        n.grad = Tensor<T>(n.value.dims());
        n.has_grad = true;
    }
    return n.grad;
}

template <typename T>
const Tensor<T>& Tape<T>::grad(Var v) {
    return grad_slot(v);
}

template <typename T>
void Tape<T>::accumulate(Var v, const Tensor<T>& g) {
    Tensor<T>& slot = grad_slot(v);
    if (slot.size() != g.size()) {
        throw std::logic_error("gradient size " + std::to_string(g.size()) + " does not match value size " +
                               std::to_string(slot.size()));
    }
    for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
}

template <typename T>
void Tape<T>::backward(Var loss) {
    if (!recording_) throw std::logic_error("backward on a tape that does not record gradients");
    if (nodes_.empty()) throw std::logic_error("backward called before any forward pass");
    if (consumed_) throw std::logic_error("backward already ran on this tape");
    Node& target = node(loss);
    if (target.value.size() != 1) throw std::invalid_argument("backward target must be a scalar");
    consumed_ = true;
    grad_slot(loss)[0] = T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.has_grad || !n.backward) continue;
        n.backward(*this, n.grad);
    }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace ttyard::nn
