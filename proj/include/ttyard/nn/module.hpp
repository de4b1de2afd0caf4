#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ttyard/cost_model.hpp"
#include "ttyard/nn/ops.hpp"
#include "ttyard/random.hpp"

namespace ttyard::nn {

/// Activation extents tracked while describing a module tree.
struct FeatureShape {
    std::size_t channels;
    std::size_t h;
    std::size_t w;
};

template <typename T>
class Module {
public:
    using Slot = std::unique_ptr<Module<T>>;

    virtual ~Module() = default;

    virtual std::string kind() const = 0;
    virtual Var forward(Tape<T>& tape, Var x) = 0;

    /// Own parameters (not those of children), with local names.
    virtual void own_parameters(std::vector<std::pair<std::string, Parameter<T>*>>&) {}
    /// Own non-trainable state (BatchNorm running statistics).
    virtual void own_buffers(std::vector<std::pair<std::string, Tensor<T>*>>&) {}
    /// Child slots in a fixed order; parents may swap what a slot holds.
    virtual void children(std::vector<std::pair<std::string, Slot*>>&) {}

    /// Append cost-model entries for this module given its input extents; returns output extents.
    virtual FeatureShape describe(const std::string& path, FeatureShape in, std::vector<ArchLayer>& out) const = 0;
};

/// Dotted-path visit of every slot below `root` (pre-order).
template <typename T>
void for_each_slot(Module<T>& root, const std::function<void(const std::string&, typename Module<T>::Slot&)>& fn,
                   const std::string& prefix = "");

template <typename T>
std::vector<std::pair<std::string, Parameter<T>*>> named_parameters(Module<T>& root);

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> named_buffers(Module<T>& root);

template <typename T>
class Conv2d final : public Module<T> {
public:
    /// Kaiming-normal init with fan-in C/groups * l^2.
    Conv2d(const ConvSpec& spec, Rng& rng);
    Conv2d(const ConvSpec& spec, Tensor<T> weight, std::optional<Tensor<T>> bias = std::nullopt);

    std::string kind() const override { return "conv2d"; }
    Var forward(Tape<T>& tape, Var x) override;
    void own_parameters(std::vector<std::pair<std::string, Parameter<T>*>>& out) override;
    FeatureShape describe(const std::string& path, FeatureShape in, std::vector<ArchLayer>& out) const override;

    const ConvSpec& spec() const noexcept { return spec_; }
    Parameter<T>& weight() noexcept { return weight_; }
    const Parameter<T>& weight() const noexcept { return weight_; }
    Parameter<T>* bias() noexcept { return bias_ ? &*bias_ : nullptr; }
    const Parameter<T>* bias() const noexcept { return bias_ ? &*bias_ : nullptr; }

private:
    ConvSpec spec_;
    Parameter<T> weight_;
    std::optional<Parameter<T>> bias_;
};

template <typename T>
class BatchNorm2d final : public Module<T> {
public:
    static constexpr double kMomentum = 0.1;
    static constexpr double kEps = 1e-5;

    explicit BatchNorm2d(std::size_t channels);

    std::string kind() const override { return "batchnorm"; }
    Var forward(Tape<T>& tape, Var x) override;
    void own_parameters(std::vector<std::pair<std::string, Parameter<T>*>>& out) override;
    void own_buffers(std::vector<std::pair<std::string, Tensor<T>*>>& out) override;
    FeatureShape describe(const std::string& path, FeatureShape in, std::vector<ArchLayer>& out) const override;

    Parameter<T>& gamma() noexcept { return gamma_; }
    Parameter<T>& beta() noexcept { return beta_; }
    Tensor<T>& running_mean() noexcept { return running_mean_; }
    Tensor<T>& running_var() noexcept { return running_var_; }

private:
    Parameter<T> gamma_;
    Parameter<T> beta_;
    Tensor<T> running_mean_;
    Tensor<T> running_var_;
};

template <typename T>
class ReLU final : public Module<T> {
public:
    std::string kind() const override { return "relu"; }
    Var forward(Tape<T>& tape, Var x) override { return relu(tape, x); }
    FeatureShape describe(const std::string& path, FeatureShape in, std::vector<ArchLayer>& out) const override;
};

template <typename T>
class MaxPool2d final : public Module<T> {
public:
    MaxPool2d(std::size_t kernel, std::size_t stride, std::size_t padding)
        : kernel_(kernel), stride_(stride), padding_(padding) {}

    std::string kind() const override { return "max_pool"; }
    Var forward(Tape<T>& tape, Var x) override { return max_pool2d(tape, x, kernel_, stride_, padding_); }
    FeatureShape describe(const std::string& path, FeatureShape in, std::vector<ArchLayer>& out) const override;

private:
    std::size_t kernel_, stride_, padding_;
};

template <typename T>
class GlobalAvgPool final : public Module<T> {
public:
    std::string kind() const override { return "global_avg_pool"; }
    Var forward(Tape<T>& tape, Var x) override { return global_avg_pool(tape, x); }
    FeatureShape describe(const std::string& path, FeatureShape in, std::vector<ArchLayer>& out) const override;
};

template <typename T>
class Linear final : public Module<T> {
public:
    Linear(std::size_t in_features, std::size_t out_features, Rng& rng);

    std::string kind() const override { return "linear"; }
    Var forward(Tape<T>& tape, Var x) override { return linear(tape, x, weight_, &bias_); }
    void own_parameters(std::vector<std::pair<std::string, Parameter<T>*>>& out) override;
    FeatureShape describe(const std::string& path, FeatureShape in, std::vector<ArchLayer>& out) const override;

    Parameter<T>& weight() noexcept { return weight_; }
    Parameter<T>& bias() noexcept { return bias_; }

private:
    Parameter<T> weight_;
    Parameter<T> bias_;
};

/// Named children applied in order.
template <typename T>
class Sequential : public Module<T> {
public:
    using Slot = typename Module<T>::Slot;

    Sequential& append(std::string name, Slot module);

    std::string kind() const override { return "sequential"; }
    Var forward(Tape<T>& tape, Var x) override;
    void children(std::vector<std::pair<std::string, Slot*>>& out) override;
    FeatureShape describe(const std::string& path, FeatureShape in, std::vector<ArchLayer>& out) const override;

    std::size_t size() const noexcept { return entries_.size(); }

private:
    std::vector<std::pair<std::string, Slot>> entries_;
};

/// relu(main(x) + shortcut(x)); the shortcut is the identity when absent.
template <typename T>
class Residual final : public Module<T> {
public:
    using Slot = typename Module<T>::Slot;

    Residual(Sequential<T> main, std::unique_ptr<Sequential<T>> shortcut);

    std::string kind() const override { return "residual"; }
    Var forward(Tape<T>& tape, Var x) override;
    void children(std::vector<std::pair<std::string, Slot*>>& out) override;
    FeatureShape describe(const std::string& path, FeatureShape in, std::vector<ArchLayer>& out) const override;

private:
    Sequential<T> main_;
    Slot shortcut_;
};

/**
 * Executable lowering of a TTConv (three stages) or 1x1 low-rank conv (two
 * stages). Children are stage1, stage2[, stage3]; no nonlinearity between them.
 */
template <typename T>
class TTConv final : public Module<T> {
public:
    using Slot = typename Module<T>::Slot;

    TTConv(const ConvPlan& plan, const ConvSpec& original);

    std::string kind() const override { return "ttconv"; }
    Var forward(Tape<T>& tape, Var x) override;
    void children(std::vector<std::pair<std::string, Slot*>>& out) override;
    FeatureShape describe(const std::string& path, FeatureShape in, std::vector<ArchLayer>& out) const override;

    const ConvSpec& original_spec() const noexcept { return original_; }
    const RankChoice& ranks() const noexcept { return ranks_; }

private:
    ConvSpec original_;
    RankChoice ranks_;
    std::vector<std::pair<std::string, Slot>> stages_;
};

}  // namespace ttyard::nn
