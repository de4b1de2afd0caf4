#include "ttyard/nn/model.hpp"

#include <stdexcept>

namespace ttyard::nn {

template <typename T>
Model<T>::Model(Slot root, FeatureShape input, std::size_t num_classes)
    : root_(std::move(root)), input_(input), num_classes_(num_classes) {
    if (!root_) throw std::invalid_argument("Model: null root module");
    if (num_classes_ < 2) throw std::invalid_argument("Model: need at least two classes");
}

template <typename T>
Var Model<T>::forward(Tape<T>& tape, const Tensor<T>& images) {
    if (images.ndim() != 4 || images.dim(1) != input_.channels || images.dim(2) != input_.h ||
        images.dim(3) != input_.w) {
        throw std::invalid_argument("model input: got " + shape_to_string(images.dims()) + ", expected (N, " +
                                    std::to_string(input_.channels) + ", " + std::to_string(input_.h) + ", " +
                                    std::to_string(input_.w) + ")");
    }
    return root_->forward(tape, tape.input(images));
}

template <typename T>
std::vector<ArchLayer> Model<T>::describe() const {
    std::vector<ArchLayer> out;
    root_->describe("", input_, out);
    return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> Model<T>::state() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    for (auto& [name, p] : parameters()) out.emplace_back(name, &p->value);
    for (auto& entry : buffers()) out.push_back(entry);
    return out;
}

template <typename T>
ForwardResult<T> forward_loss(Tape<T>& tape, Model<T>& model, const Tensor<T>& images, std::span<const int> labels) {
    if (labels.size() != images.dim(0)) {
        throw std::invalid_argument("forward_loss: " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(images.dim(0)) + " images");
    }
    const Var logits = model.forward(tape, images);
    return {logits, softmax_cross_entropy(tape, logits, labels)};
}

namespace {

ConvSpec conv3x3(std::size_t c, std::size_t s, std::size_t stride) { return {c, s, 3, stride, 1}; }

template <typename T>
std::unique_ptr<Sequential<T>> conv_bn_relu(Rng& rng, const ConvSpec& spec) {
    auto seq = std::make_unique<Sequential<T>>();
    seq->append("conv", std::make_unique<Conv2d<T>>(spec, rng));
    seq->append("bn", std::make_unique<BatchNorm2d<T>>(spec.out_channels));
    seq->append("relu", std::make_unique<ReLU<T>>());
    return seq;
}

template <typename T>
std::unique_ptr<Residual<T>> basic_block(Rng& rng, std::size_t in, std::size_t out, std::size_t stride) {
    Sequential<T> main;
    main.append("conv1", std::make_unique<Conv2d<T>>(conv3x3(in, out, stride), rng));
    main.append("bn1", std::make_unique<BatchNorm2d<T>>(out));
    main.append("relu1", std::make_unique<ReLU<T>>());
    main.append("conv2", std::make_unique<Conv2d<T>>(conv3x3(out, out, 1), rng));
    main.append("bn2", std::make_unique<BatchNorm2d<T>>(out));
    std::unique_ptr<Sequential<T>> shortcut;
    if (stride != 1 || in != out) {
        shortcut = std::make_unique<Sequential<T>>();
        shortcut->append("conv", std::make_unique<Conv2d<T>>(ConvSpec{in, out, 1, stride, 0}, rng));
        shortcut->append("bn", std::make_unique<BatchNorm2d<T>>(out));
    }
    return std::make_unique<Residual<T>>(std::move(main), std::move(shortcut));
}

}  // namespace

template <typename T>
Model<T> build_toy_resnet(Rng& rng, std::size_t resolution, std::size_t num_classes, std::size_t in_channels) {
    auto root = std::make_unique<Sequential<T>>();
    root->append("stem", conv_bn_relu<T>(rng, conv3x3(in_channels, 32, 1)));
    root->append("down1", conv_bn_relu<T>(rng, conv3x3(32, 64, 2)));
    root->append("down2", conv_bn_relu<T>(rng, conv3x3(64, 128, 2)));
    root->append("block1", basic_block<T>(rng, 128, 128, 1));
    root->append("block2", basic_block<T>(rng, 128, 256, 2));
    root->append("block3", basic_block<T>(rng, 256, 256, 1));
    root->append("pool", std::make_unique<GlobalAvgPool<T>>());
    root->append("fc", std::make_unique<Linear<T>>(256, num_classes, rng));
    return Model<T>(std::move(root), FeatureShape{in_channels, resolution, resolution}, num_classes);
}

template class Model<float>;
template class Model<double>;
template ForwardResult<float> forward_loss(Tape<float>&, Model<float>&, const Tensor<float>&, std::span<const int>);
template ForwardResult<double> forward_loss(Tape<double>&, Model<double>&, const Tensor<double>&,
                                            std::span<const int>);
template Model<float> build_toy_resnet<float>(Rng&, std::size_t, std::size_t, std::size_t);
template Model<double> build_toy_resnet<double>(Rng&, std::size_t, std::size_t, std::size_t);

}  // namespace ttyard::nn
