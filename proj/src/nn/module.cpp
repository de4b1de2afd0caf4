#include "ttyard/nn/module.hpp"

#include <cmath>
#include <stdexcept>

namespace ttyard::nn {
namespace {

std::string join(const std::string& prefix, const std::string& name) {
    return prefix.empty() ? name : prefix + "." + name;
}

template <typename Fn>
Var with_layer_name(const std::string& name, Fn&& fn) {
    try {
        return fn();
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("layer '" + name + "': " + e.what());
    }
}

template <typename T>
Tensor<T> kaiming_normal(const Shape& dims, std::size_t fan_in, Rng& rng) {
    return random_normal<T>(dims, rng, std::sqrt(2.0 / static_cast<double>(fan_in)));
}

}  // namespace

template <typename T>
void for_each_slot(Module<T>& root, const std::function<void(const std::string&, typename Module<T>::Slot&)>& fn,
                   const std::string& prefix) {
    std::vector<std::pair<std::string, typename Module<T>::Slot*>> kids;
    root.children(kids);
    for (auto& [name, slot] : kids) {
        const std::string path = join(prefix, name);
        fn(path, *slot);
        if (*slot) for_each_slot<T>(**slot, fn, path);
    }
}

namespace {

template <typename T, typename Visit>
void walk(Module<T>& m, const std::string& prefix, Visit&& visit) {
    visit(prefix, m);
    std::vector<std::pair<std::string, typename Module<T>::Slot*>> kids;
    m.children(kids);
    for (auto& [name, slot] : kids)
        if (*slot) walk<T>(**slot, join(prefix, name), visit);
}

}  // namespace

template <typename T>
std::vector<std::pair<std::string, Parameter<T>*>> named_parameters(Module<T>& root) {
    std::vector<std::pair<std::string, Parameter<T>*>> out;
    walk<T>(root, "", [&](const std::string& path, Module<T>& m) {
        std::vector<std::pair<std::string, Parameter<T>*>> own;
        m.own_parameters(own);
        for (auto& [name, p] : own) out.emplace_back(join(path, name), p);
    });
    return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> named_buffers(Module<T>& root) {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    walk<T>(root, "", [&](const std::string& path, Module<T>& m) {
        std::vector<std::pair<std::string, Tensor<T>*>> own;
        m.own_buffers(own);
        for (auto& [name, b] : own) out.emplace_back(join(path, name), b);
    });
    return out;
}

// Conv2d

template <typename T>
Conv2d<T>::Conv2d(const ConvSpec& spec, Rng& rng) : spec_(spec) {
    spec_.validate();
    const std::size_t fan_in = (spec_.in_channels / spec_.groups) * spec_.kernel * spec_.kernel;
    weight_ = Parameter<T>(kaiming_normal<T>(spec_.weight_dims(), fan_in, rng));
    if (spec_.has_bias) bias_.emplace(Tensor<T>({spec_.out_channels}));
}

template <typename T>
Conv2d<T>::Conv2d(const ConvSpec& spec, Tensor<T> weight, std::optional<Tensor<T>> bias) : spec_(spec) {
    spec_.validate();
    if (weight.dims() != spec_.weight_dims()) {
        throw std::invalid_argument("Conv2d: weight dims " + shape_to_string(weight.dims()) + ", expected " +
                                    shape_to_string(spec_.weight_dims()));
    }
    weight_ = Parameter<T>(std::move(weight));
    spec_.has_bias = bias.has_value();
    if (bias) {
        if (bias->size() != spec_.out_channels) throw std::invalid_argument("Conv2d: bias size mismatch");
        bias_.emplace(std::move(*bias));
    }
}

template <typename T>
Var Conv2d<T>::forward(Tape<T>& tape, Var x) {
    return conv2d(tape, x, weight_, bias(), spec_);
}

template <typename T>
void Conv2d<T>::own_parameters(std::vector<std::pair<std::string, Parameter<T>*>>& out) {
    out.emplace_back("weight", &weight_);
    if (bias_) out.emplace_back("bias", &*bias_);
}

template <typename T>
FeatureShape Conv2d<T>::describe(const std::string& path, FeatureShape in, std::vector<ArchLayer>& out) const {
    out.push_back(ArchLayer::convolution(path, spec_, in.h, in.w));
    return {spec_.out_channels, spec_.out_extent(in.h), spec_.out_extent(in.w)};
}

// BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::size_t channels)
    : gamma_(Tensor<T>({channels}, T{1})),
      beta_(Tensor<T>({channels})),
      running_mean_({channels}),
      running_var_({channels}, T{1}) {}

template <typename T>
Var BatchNorm2d<T>::forward(Tape<T>& tape, Var x) {
    return batch_norm(tape, x, gamma_, beta_, running_mean_, running_var_, kMomentum, kEps);
}

template <typename T>
void BatchNorm2d<T>::own_parameters(std::vector<std::pair<std::string, Parameter<T>*>>& out) {
    out.emplace_back("weight", &gamma_);
    out.emplace_back("bias", &beta_);
}

template <typename T>
void BatchNorm2d<T>::own_buffers(std::vector<std::pair<std::string, Tensor<T>*>>& out) {
    out.emplace_back("running_mean", &running_mean_);
    out.emplace_back("running_var", &running_var_);
}

template <typename T>
FeatureShape BatchNorm2d<T>::describe(const std::string& path, FeatureShape in, std::vector<ArchLayer>& out) const {
    out.push_back(ArchLayer::batch_norm(path, in.channels, in.h, in.w));
    return in;
}

template <typename T>
FeatureShape ReLU<T>::describe(const std::string& path, FeatureShape in, std::vector<ArchLayer>& out) const {
    out.push_back(ArchLayer::elementwise(path, LayerKind::relu, in.channels, in.h, in.w));
    return in;
}

template <typename T>
FeatureShape MaxPool2d<T>::describe(const std::string& path, FeatureShape in, std::vector<ArchLayer>& out) const {
    out.push_back(ArchLayer::max_pool(path, in.channels, kernel_, stride_, padding_, in.h, in.w));
    const ConvSpec window{1, 1, kernel_, stride_, padding_};
    return {in.channels, window.out_extent(in.h), window.out_extent(in.w)};
}

template <typename T>
FeatureShape GlobalAvgPool<T>::describe(const std::string& path, FeatureShape in, std::vector<ArchLayer>& out) const {
    out.push_back(ArchLayer::global_avg_pool(path, in.channels, in.h, in.w));
    return {in.channels, 1, 1};
}

// Linear

template <typename T>
Linear<T>::Linear(std::size_t in_features, std::size_t out_features, Rng& rng)
    : weight_(kaiming_normal<T>({out_features, in_features}, in_features, rng)),
      bias_(Tensor<T>({out_features})) {}

template <typename T>
void Linear<T>::own_parameters(std::vector<std::pair<std::string, Parameter<T>*>>& out) {
    out.emplace_back("weight", &weight_);
    out.emplace_back("bias", &bias_);
}

template <typename T>
FeatureShape Linear<T>::describe(const std::string& path, FeatureShape in, std::vector<ArchLayer>& out) const {
    out.push_back(ArchLayer::linear(path, weight_.value.dim(1), weight_.value.dim(0), true));
    return {weight_.value.dim(0), in.h, in.w};
}

// Sequential

template <typename T>
Sequential<T>& Sequential<T>::append(std::string name, Slot module) {
    entries_.emplace_back(std::move(name), std::move(module));
    return *this;
}

template <typename T>
Var Sequential<T>::forward(Tape<T>& tape, Var x) {
    for (auto& [name, module] : entries_) {
        x = with_layer_name(name, [&] { return module->forward(tape, x); });
    }
    return x;
}

template <typename T>
void Sequential<T>::children(std::vector<std::pair<std::string, Slot*>>& out) {
    for (auto& [name, module] : entries_) out.emplace_back(name, &module);
}

template <typename T>
FeatureShape Sequential<T>::describe(const std::string& path, FeatureShape in, std::vector<ArchLayer>& out) const {
    for (const auto& [name, module] : entries_) in = module->describe(join(path, name), in, out);
    return in;
}

// Residual

template <typename T>
Residual<T>::Residual(Sequential<T> main, std::unique_ptr<Sequential<T>> shortcut)
    : main_(std::move(main)), shortcut_(std::move(shortcut)) {}

template <typename T>
Var Residual<T>::forward(Tape<T>& tape, Var x) {
    Var y = main_.forward(tape, x);
    Var skip = shortcut_ ? with_layer_name("shortcut", [&] { return shortcut_->forward(tape, x); }) : x;
    return relu(tape, with_layer_name("add", [&] { return add(tape, y, skip); }));
}

template <typename T>
void Residual<T>::children(std::vector<std::pair<std::string, Slot*>>& out) {
    main_.children(out);
    if (shortcut_) out.emplace_back("shortcut", &shortcut_);
}

template <typename T>
FeatureShape Residual<T>::describe(const std::string& path, FeatureShape in, std::vector<ArchLayer>& out) const {
    const FeatureShape y = main_.describe(path, in, out);
    if (shortcut_) shortcut_->describe(join(path, "shortcut"), in, out);
    out.push_back(ArchLayer::elementwise(join(path, "add"), LayerKind::add, y.channels, y.h, y.w));
    out.push_back(ArchLayer::elementwise(join(path, "relu2"), LayerKind::relu, y.channels, y.h, y.w));
    return y;
}

// TTConv

namespace {

template <typename T>
std::unique_ptr<Module<T>> stage_module(const PlanStage& stage) {
    std::optional<Tensor<T>> bias;
    if (stage.bias) bias = Tensor<double>({stage.bias->size()}, *stage.bias).template cast<T>();
    return std::make_unique<Conv2d<T>>(stage.spec, stage.weight.template cast<T>(), std::move(bias));
}

}  // namespace

template <typename T>
TTConv<T>::TTConv(const ConvPlan& plan, const ConvSpec& original) : original_(original) {
    original_.validate();
    if (const auto* three = std::get_if<ThreeConvPlan>(&plan)) {
        ranks_ = RankChoice::spatial(three->rank1, three->rank2);
    } else {
        ranks_ = RankChoice::pointwise(std::get<TwoConvPlan>(plan).rank);
    }
    std::size_t k = 1;
    for (const PlanStage* stage : plan_stages(plan)) {
        stages_.emplace_back("stage" + std::to_string(k++), stage_module<T>(*stage));
    }
}

template <typename T>
Var TTConv<T>::forward(Tape<T>& tape, Var x) {
    for (auto& [name, module] : stages_) x = with_layer_name(name, [&] { return module->forward(tape, x); });
    return x;
}

template <typename T>
void TTConv<T>::children(std::vector<std::pair<std::string, Slot*>>& out) {
    for (auto& [name, module] : stages_) out.emplace_back(name, &module);
}

template <typename T>
FeatureShape TTConv<T>::describe(const std::string& path, FeatureShape in, std::vector<ArchLayer>& out) const {
    out.push_back(ArchLayer::tt_convolution(path, original_, ranks_, in.h, in.w));
    return {original_.out_channels, original_.out_extent(in.h), original_.out_extent(in.w)};
}

#define TTYARD_INSTANTIATE_MODULES(T)                                                                            \
    template void for_each_slot<T>(Module<T>&,                                                                   \
                                   const std::function<void(const std::string&, typename Module<T>::Slot&)>&,    \
                                   const std::string&);                                                          \
    template std::vector<std::pair<std::string, Parameter<T>*>> named_parameters<T>(Module<T>&);                 \
    template std::vector<std::pair<std::string, Tensor<T>*>> named_buffers<T>(Module<T>&);                       \
    template class Conv2d<T>;                                                                                    \
    template class BatchNorm2d<T>;                                                                               \
    template class ReLU<T>;                                                                                      \
    template class MaxPool2d<T>;                                                                                 \
    template class GlobalAvgPool<T>;                                                                             \
    template class Linear<T>;                                                                                    \
    template class Sequential<T>;                                                                                \
    template class Residual<T>;                                                                                  \
    template class TTConv<T>;

TTYARD_INSTANTIATE_MODULES(float)
TTYARD_INSTANTIATE_MODULES(double)

}  // namespace ttyard::nn
