#include "ttyard/cost_model.hpp"

#include <array>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace ttyard {

LayerCost cost_dense(const ConvSpec& spec, std::size_t in_h, std::size_t in_w) {
    spec.validate();
    if (in_h < 1 || in_w < 1) throw std::invalid_argument("cost_dense: input resolution must be positive");
    LayerCost cost;
    cost.out_h = spec.out_extent(in_h);
    cost.out_w = spec.out_extent(in_w);
    const std::uint64_t per_pixel =
        static_cast<std::uint64_t>(spec.out_channels) * (spec.in_channels / spec.groups) * spec.kernel * spec.kernel;
    cost.macs = static_cast<std::uint64_t>(cost.out_h) * cost.out_w * per_pixel;
    cost.params = spec.weight_count() + (spec.has_bias ? spec.out_channels : 0);
    return cost;
}

LayerCost cost_ttconv(const ConvSpec& spec, const RankChoice& ranks, std::size_t in_h, std::size_t in_w) {
    spec.validate();
    if (spec.groups != 1) throw std::invalid_argument("cost_ttconv: only dense convolutions are decomposed");
    if (in_h < 1 || in_w < 1) throw std::invalid_argument("cost_ttconv: input resolution must be positive");
    const std::uint64_t C = spec.in_channels, S = spec.out_channels, l = spec.kernel;
    const std::uint64_t bias = spec.has_bias ? S : 0;

    LayerCost cost;
    cost.out_h = spec.out_extent(in_h);
    cost.out_w = spec.out_extent(in_w);
    const std::uint64_t out_pixels = static_cast<std::uint64_t>(cost.out_h) * cost.out_w;

    if (ranks.kind == RankKind::pointwise) {
        if (l != 1) throw std::invalid_argument("cost_ttconv: pointwise ranks need a 1x1 kernel");
        const std::uint64_t R = ranks.r;
        cost.macs = out_pixels * (C * R + R * S);
        cost.params = C * R + R * S + bias;
        return cost;
    }
    const std::uint64_t R1 = ranks.r1, R2 = ranks.r2;
    const std::uint64_t in_pixels = static_cast<std::uint64_t>(in_h) * in_w;
    cost.macs = in_pixels * C * R1 * R2 + out_pixels * R1 * R2 * l * l + out_pixels * R2 * S;
    cost.params = C * R1 * R2 + R1 * l * l + R2 * S + bias;
    return cost;
}

namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 8> kKindNames{{
    {LayerKind::conv, "conv"},
    {LayerKind::ttconv, "ttconv"},
    {LayerKind::linear, "linear"},
    {LayerKind::batchnorm, "batchnorm"},
    {LayerKind::relu, "relu"},
    {LayerKind::max_pool, "max_pool"},
    {LayerKind::global_avg_pool, "global_avg_pool"},
    {LayerKind::add, "add"},
}};

bool misaligned(std::size_t n) { return n % 16 != 0; }

}  // namespace

std::string_view to_string(LayerKind kind) {
    for (const auto& [k, name] : kKindNames)
        if (k == kind) return name;
    throw std::invalid_argument("unknown layer kind " + std::to_string(static_cast<int>(kind)));
}

LayerKind layer_kind_from_string(std::string_view name) {
    for (const auto& [k, n] : kKindNames)
        if (n == name) return k;
    throw std::invalid_argument("unknown layer kind '" + std::string(name) + "'");
}

ArchLayer ArchLayer::convolution(std::string name, const ConvSpec& spec, std::size_t in_h, std::size_t in_w) {
    ArchLayer l;
    l.name = std::move(name);
    l.kind = LayerKind::conv;
    l.conv = spec;
    l.in_h = in_h;
    l.in_w = in_w;
    return l;
}

ArchLayer ArchLayer::tt_convolution(std::string name, const ConvSpec& spec, const RankChoice& ranks,
                                    std::size_t in_h, std::size_t in_w) {
    ArchLayer l = convolution(std::move(name), spec, in_h, in_w);
    l.kind = LayerKind::ttconv;
    l.ranks = ranks;
    return l;
}

ArchLayer ArchLayer::linear(std::string name, std::size_t in_features, std::size_t out_features, bool bias) {
    ArchLayer l;
    l.name = std::move(name);
    l.kind = LayerKind::linear;
    l.in_features = in_features;
    l.out_features = out_features;
    l.bias = bias;
    return l;
}

ArchLayer ArchLayer::batch_norm(std::string name, std::size_t channels, std::size_t h, std::size_t w) {
    return elementwise(std::move(name), LayerKind::batchnorm, channels, h, w);
}

ArchLayer ArchLayer::elementwise(std::string name, LayerKind kind, std::size_t channels, std::size_t h,
                                 std::size_t w) {
    ArchLayer l;
    l.name = std::move(name);
    l.kind = kind;
    l.channels = channels;
    l.in_h = h;
    l.in_w = w;
    return l;
}

ArchLayer ArchLayer::max_pool(std::string name, std::size_t channels, std::size_t kernel, std::size_t stride,
                              std::size_t padding, std::size_t h, std::size_t w) {
    ArchLayer l = elementwise(std::move(name), LayerKind::max_pool, channels, h, w);
    l.pool_kernel = kernel;
    l.pool_stride = stride;
    l.pool_padding = padding;
    return l;
}

ArchLayer ArchLayer::global_avg_pool(std::string name, std::size_t channels, std::size_t h, std::size_t w) {
    return elementwise(std::move(name), LayerKind::global_avg_pool, channels, h, w);
}

LayerCost layer_cost(const ArchLayer& layer) {
    switch (layer.kind) {
        case LayerKind::conv:
            return cost_dense(layer.conv, layer.in_h, layer.in_w);
        case LayerKind::ttconv:
            if (!layer.ranks) throw std::invalid_argument("ttconv layer '" + layer.name + "' has no ranks");
            return cost_ttconv(layer.conv, *layer.ranks, layer.in_h, layer.in_w);
        case LayerKind::linear: {
            LayerCost c;
            c.macs = static_cast<std::uint64_t>(layer.in_features) * layer.out_features;
            c.params = c.macs + (layer.bias ? layer.out_features : 0);
            c.out_h = c.out_w = 1;
            return c;
        }
        case LayerKind::batchnorm:
            return LayerCost{0, 2 * static_cast<std::uint64_t>(layer.channels), layer.in_h, layer.in_w};
        case LayerKind::relu:
        case LayerKind::add:
            return LayerCost{0, 0, layer.in_h, layer.in_w};
        case LayerKind::max_pool: {
            ConvSpec window{1, 1, layer.pool_kernel, layer.pool_stride, layer.pool_padding};
            return LayerCost{0, 0, window.out_extent(layer.in_h), window.out_extent(layer.in_w)};
        }
        case LayerKind::global_avg_pool:
            return LayerCost{0, 0, 1, 1};
    }
    throw std::invalid_argument("layer '" + layer.name + "' has unknown kind " +
                                std::to_string(static_cast<int>(layer.kind)));
}

ModelReport model_report(const std::vector<ArchLayer>& arch) {
    ModelReport report;
    for (const ArchLayer& layer : arch) {
        ReportRow row{layer.name, layer.kind, layer_cost(layer), false};
        if (layer.kind == LayerKind::conv || layer.kind == LayerKind::ttconv) {
            row.misaligned16 = misaligned(layer.conv.in_channels) || misaligned(layer.conv.out_channels);
            if (layer.ranks && layer.ranks->kind == RankKind::spatial) row.misaligned16 |= misaligned(layer.ranks->r2);
            if (layer.ranks && layer.ranks->kind == RankKind::pointwise) row.misaligned16 |= misaligned(layer.ranks->r);
        }
        report.total_macs += row.cost.macs;
        report.total_params += row.cost.params;
        report.rows.push_back(std::move(row));
    }
    return report;
}

void write_report_text(std::ostream& out, const ModelReport& report, std::string_view title) {
    out << "# " << title << "\n";
    out << "# MACs = multiply-accumulates (the GFLOPs convention of CNN model tables); "
           "BN/activations contribute parameters only\n";
    out << std::left << std::setw(34) << "layer" << std::setw(16) << "kind" << std::right << std::setw(14) << "macs"
        << std::setw(12) << "params" << std::setw(10) << "out" << "  flag\n";
    for (const auto& row : report.rows) {
        std::ostringstream dims;
        dims << row.cost.out_h << "x" << row.cost.out_w;
        out << std::left << std::setw(34) << row.name << std::setw(16) << to_string(row.kind) << std::right
            << std::setw(14) << row.cost.macs << std::setw(12) << row.cost.params << std::setw(10) << dims.str()
            << (row.misaligned16 ? "  !16" : "") << "\n";
    }
    out << std::fixed << std::setprecision(4);
    out << "total macs   " << report.total_macs << "  (" << static_cast<double>(report.total_macs) / 1e9
        << " GMACs)\n";
    out << "total params " << report.total_params << "  (" << static_cast<double>(report.total_params) / 1e6
        << " M)\n";
    out << std::defaultfloat;
}

void write_report_csv(std::ostream& out, const ModelReport& report) {
    out << "layer,kind,macs,params,out_h,out_w\n";
    for (const auto& row : report.rows) {
        out << row.name << ',' << to_string(row.kind) << ',' << row.cost.macs << ',' << row.cost.params << ','
            << row.cost.out_h << ',' << row.cost.out_w << '\n';
    }
}

std::vector<ArchLayer> decompose_arch(const std::vector<ArchLayer>& arch) {
    std::vector<ArchLayer> out;
    out.reserve(arch.size());
    for (const ArchLayer& layer : arch) {
        if (layer.kind == LayerKind::conv) {
            if (auto ranks = select_ranks(layer.conv)) {
                out.push_back(ArchLayer::tt_convolution(layer.name, layer.conv, *ranks, layer.in_h, layer.in_w));
                continue;
            }
        }
        out.push_back(layer);
    }
    return out;
}

namespace {

// Appends conv + bn (+ relu) and advances the running resolution.
struct ArchBuilder {
    std::vector<ArchLayer> layers;
    std::size_t h;
    std::size_t w;

    std::pair<std::size_t, std::size_t> conv_bn(const std::string& conv_name, const std::string& bn_name,
                                                const ConvSpec& spec, std::size_t in_h, std::size_t in_w) {
        layers.push_back(ArchLayer::convolution(conv_name, spec, in_h, in_w));
        const std::size_t oh = spec.out_extent(in_h), ow = spec.out_extent(in_w);
        layers.push_back(ArchLayer::batch_norm(bn_name, spec.out_channels, oh, ow));
        return {oh, ow};
    }

    void relu(const std::string& name, std::size_t channels) {
        layers.push_back(ArchLayer::elementwise(name, LayerKind::relu, channels, h, w));
    }
};

ConvSpec conv_spec(std::size_t c, std::size_t s, std::size_t l, std::size_t stride, std::size_t pad) {
    return ConvSpec{c, s, l, stride, pad, false, 1, false};
}

}  // namespace

std::vector<ArchLayer> resnet_arch(int depth, std::size_t resolution, std::size_t num_classes) {
    std::array<int, 4> blocks{};
    bool bottleneck = false;
    switch (depth) {
        case 18: blocks = {2, 2, 2, 2}; break;
        case 34: blocks = {3, 4, 6, 3}; break;
        case 50: blocks = {3, 4, 6, 3}; bottleneck = true; break;
        case 101: blocks = {3, 4, 23, 3}; bottleneck = true; break;
        default: throw std::invalid_argument("resnet_arch: unsupported depth " + std::to_string(depth));
    }
    const std::size_t expansion = bottleneck ? 4 : 1;

    ArchBuilder b{{}, resolution, resolution};
    std::tie(b.h, b.w) = b.conv_bn("conv1", "bn1", conv_spec(3, 64, 7, 2, 3), b.h, b.w);
    b.relu("relu", 64);
    b.layers.push_back(ArchLayer::max_pool("maxpool", 64, 3, 2, 1, b.h, b.w));
    {
        ConvSpec window{1, 1, 3, 2, 1};
        b.h = window.out_extent(b.h);
        b.w = window.out_extent(b.w);
    }

    std::size_t in_ch = 64;
    for (std::size_t stage = 0; stage < 4; ++stage) {
        const std::size_t width = std::size_t{64} << stage;
        const std::size_t out_ch = width * expansion;
        for (int blk = 0; blk < blocks[stage]; ++blk) {
            const std::size_t stride = (stage > 0 && blk == 0) ? 2 : 1;
            const std::string p = "layer" + std::to_string(stage + 1) + "." + std::to_string(blk) + ".";
            const std::size_t h0 = b.h, w0 = b.w;
            std::size_t h = h0, w = w0;
            if (bottleneck) {
                std::tie(h, w) = b.conv_bn(p + "conv1", p + "bn1", conv_spec(in_ch, width, 1, 1, 0), h, w);
                b.layers.push_back(ArchLayer::elementwise(p + "relu1", LayerKind::relu, width, h, w));
                std::tie(h, w) = b.conv_bn(p + "conv2", p + "bn2", conv_spec(width, width, 3, stride, 1), h, w);
                b.layers.push_back(ArchLayer::elementwise(p + "relu2", LayerKind::relu, width, h, w));
                std::tie(h, w) = b.conv_bn(p + "conv3", p + "bn3", conv_spec(width, out_ch, 1, 1, 0), h, w);
            } else {
                std::tie(h, w) = b.conv_bn(p + "conv1", p + "bn1", conv_spec(in_ch, width, 3, stride, 1), h, w);
                b.layers.push_back(ArchLayer::elementwise(p + "relu1", LayerKind::relu, width, h, w));
                std::tie(h, w) = b.conv_bn(p + "conv2", p + "bn2", conv_spec(width, width, 3, 1, 1), h, w);
            }
            if (stride != 1 || in_ch != out_ch) {
                b.conv_bn(p + "downsample.0", p + "downsample.1", conv_spec(in_ch, out_ch, 1, stride, 0), h0, w0);
            }
            b.h = h;
            b.w = w;
            b.layers.push_back(ArchLayer::elementwise(p + "add", LayerKind::add, out_ch, h, w));
            b.relu(p + "relu", out_ch);
            in_ch = out_ch;
        }
    }
    b.layers.push_back(ArchLayer::global_avg_pool("avgpool", in_ch, b.h, b.w));
    b.layers.push_back(ArchLayer::linear("fc", in_ch, num_classes, true));
    return b.layers;
}

std::vector<ArchLayer> toy_arch(std::size_t resolution, std::size_t num_classes, std::size_t in_channels) {
    ArchBuilder b{{}, resolution, resolution};
    std::tie(b.h, b.w) = b.conv_bn("stem.conv", "stem.bn", conv_spec(in_channels, 32, 3, 1, 1), b.h, b.w);
    b.relu("stem.relu", 32);
    std::tie(b.h, b.w) = b.conv_bn("down1.conv", "down1.bn", conv_spec(32, 64, 3, 2, 1), b.h, b.w);
    b.relu("down1.relu", 64);
    std::tie(b.h, b.w) = b.conv_bn("down2.conv", "down2.bn", conv_spec(64, 128, 3, 2, 1), b.h, b.w);
    b.relu("down2.relu", 128);

    struct Block {
        const char* name;
        std::size_t in, out, stride;
    };
    for (const Block& blk : {Block{"block1", 128, 128, 1}, Block{"block2", 128, 256, 2}, Block{"block3", 256, 256, 1}}) {
        const std::string p = std::string(blk.name) + ".";
        const std::size_t h0 = b.h, w0 = b.w;
        auto [h, w] = b.conv_bn(p + "conv1", p + "bn1", conv_spec(blk.in, blk.out, 3, blk.stride, 1), h0, w0);
        b.layers.push_back(ArchLayer::elementwise(p + "relu1", LayerKind::relu, blk.out, h, w));
        std::tie(h, w) = b.conv_bn(p + "conv2", p + "bn2", conv_spec(blk.out, blk.out, 3, 1, 1), h, w);
        if (blk.stride != 1 || blk.in != blk.out) {
            b.conv_bn(p + "shortcut.conv", p + "shortcut.bn", conv_spec(blk.in, blk.out, 1, blk.stride, 0), h0, w0);
        }
        b.h = h;
        b.w = w;
        b.layers.push_back(ArchLayer::elementwise(p + "add", LayerKind::add, blk.out, h, w));
        b.relu(p + "relu2", blk.out);
    }
    b.layers.push_back(ArchLayer::global_avg_pool("pool", 256, b.h, b.w));
    b.layers.push_back(ArchLayer::linear("fc", 256, num_classes, true));
    return b.layers;
}

std::vector<ArchLayer> arch_preset(std::string_view name, std::size_t resolution) {
    if (name == "resnet18") return resnet_arch(18, resolution);
    if (name == "resnet34") return resnet_arch(34, resolution);
    if (name == "resnet50") return resnet_arch(50, resolution);
    if (name == "resnet101") return resnet_arch(101, resolution);
    if (name == "toy") return toy_arch(resolution);
    throw std::invalid_argument("unknown architecture '" + std::string(name) +
                                "' (expected resnet18, resnet34, resnet50, resnet101 or toy)");
}

}  // namespace ttyard
