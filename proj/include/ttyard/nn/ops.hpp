#pragma once

#include <cstddef>
#include <span>

#include "ttyard/nn/tape.hpp"
#include "ttyard/ttconv.hpp"

namespace ttyard::nn {

/**
 * 2-D convolution on NCHW activations via patch gather + GEMM.
 *
 * With spec.shared_group_kernel the weight has dims (S/groups, C/groups, l, l)
 * and is applied to every group, so its gradient is the sum over groups.
 */
template <typename T>
Var conv2d(Tape<T>& tape, Var x, Parameter<T>& weight, Parameter<T>* bias, const ConvSpec& spec);

/// Per-channel batch normalization; running statistics update only in training mode.
template <typename T>
Var batch_norm(Tape<T>& tape, Var x, Parameter<T>& gamma, Parameter<T>& beta, Tensor<T>& running_mean,
               Tensor<T>& running_var, double momentum, double eps);

template <typename T>
Var relu(Tape<T>& tape, Var x);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

/// alpha * a + (1 - alpha) * b with a scalar trainable alpha.
template <typename T>
Var mix(Tape<T>& tape, Var a, Var b, Parameter<T>& alpha);

template <typename T>
Var max_pool2d(Tape<T>& tape, Var x, std::size_t kernel, std::size_t stride, std::size_t padding);

/// (N, C, H, W) -> (N, C)
template <typename T>
Var global_avg_pool(Tape<T>& tape, Var x);

/// x (N, F), weight (O, F), bias (O) -> (N, O)
template <typename T>
Var linear(Tape<T>& tape, Var x, Parameter<T>& weight, Parameter<T>* bias);

/// Mean softmax cross-entropy of logits (N, K) against integer labels.
template <typename T>
Var softmax_cross_entropy(Tape<T>& tape, Var logits, std::span<const int> labels);

/// sum(x * weights); a scalar probe loss for gradient checks.
template <typename T>
Var weighted_sum(Tape<T>& tape, Var x, const Tensor<T>& weights);

/// Records p.value as a tape value whose gradient accumulates into p.grad.
template <typename T>
Var leaf(Tape<T>& tape, Parameter<T>& p);

}  // namespace ttyard::nn
