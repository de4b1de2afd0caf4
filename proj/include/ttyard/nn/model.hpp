#pragma once

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ttyard/nn/module.hpp"

namespace ttyard::nn {

/// A classifier: root module tree plus its expected input extents.
template <typename T>
class Model {
public:
    using Slot = typename Module<T>::Slot;

    Model(Slot root, FeatureShape input, std::size_t num_classes);

    Module<T>& root() noexcept { return *root_; }
    const Module<T>& root() const noexcept { return *root_; }
    const FeatureShape& input_shape() const noexcept { return input_; }
    std::size_t num_classes() const noexcept { return num_classes_; }

    /// images (N, C, H, W) -> logits (N, num_classes).
    Var forward(Tape<T>& tape, const Tensor<T>& images);

    std::vector<ArchLayer> describe() const;
    std::vector<std::pair<std::string, Parameter<T>*>> parameters() { return named_parameters(*root_); }
    std::vector<std::pair<std::string, Tensor<T>*>> buffers() { return named_buffers(*root_); }

    /// Parameters followed by buffers, keyed by dotted path.
    std::vector<std::pair<std::string, Tensor<T>*>> state();

private:
    Slot root_;
    FeatureShape input_;
    std::size_t num_classes_;
};

template <typename T>
struct ForwardResult {
    Var logits;
    Var loss;
};

template <typename T>
ForwardResult<T> forward_loss(Tape<T>& tape, Model<T>& model, const Tensor<T>& images, std::span<const int> labels);

/**
 * Desk-scale residual network whose layer names match toy_arch():
 * stem, down1, down2 (32, 64, 128 channels), block1 (128), block2 (128 -> 256,
 * stride 2, projection shortcut), block3 (256), pool, fc.
 */
template <typename T>
Model<T> build_toy_resnet(Rng& rng, std::size_t resolution = 16, std::size_t num_classes = 4,
                          std::size_t in_channels = 3);

}  // namespace ttyard::nn
