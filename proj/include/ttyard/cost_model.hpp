#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ttyard/ttconv.hpp"

namespace ttyard {

/// MACs are multiply-accumulates (the "FLOPs" figure commonly quoted for CNNs).
struct LayerCost {
    std::uint64_t macs = 0;
    std::uint64_t params = 0;
    std::size_t out_h = 0;
    std::size_t out_w = 0;

    bool operator==(const LayerCost&) const = default;
};

/// macs = out_h * out_w * S * (C / groups) * l^2; params = stored weights (+ S with bias).
LayerCost cost_dense(const ConvSpec& spec, std::size_t in_h, std::size_t in_w);

/**
 * Exact cost of the lowered TTConv.
 *
 * Spatial ranks: the first pointwise stage runs at the input resolution, the
 * grouped and last stages at the output resolution; the shared group kernel
 * is counted once, giving C R1 R2 + R1 l^2 + R2 S parameters. Pointwise
 * ranks: C R + R S per output pixel.
 */
LayerCost cost_ttconv(const ConvSpec& spec, const RankChoice& ranks, std::size_t in_h, std::size_t in_w);

enum class LayerKind { conv, ttconv, linear, batchnorm, relu, max_pool, global_avg_pool, add };

std::string_view to_string(LayerKind kind);
/// Throws std::invalid_argument on an unknown name.
LayerKind layer_kind_from_string(std::string_view name);

/// One entry of an architecture table; each entry carries its own input resolution.
struct ArchLayer {
    std::string name;
    LayerKind kind = LayerKind::conv;
    std::size_t in_h = 1;
    std::size_t in_w = 1;
    ConvSpec conv;                    // conv, ttconv
    std::optional<RankChoice> ranks;  // ttconv
    std::size_t channels = 0;         // batchnorm, relu, pools, add
    std::size_t in_features = 0;      // linear
    std::size_t out_features = 0;     // linear
    bool bias = false;                // linear
    std::size_t pool_kernel = 1;      // max_pool
    std::size_t pool_stride = 1;
    std::size_t pool_padding = 0;

    static ArchLayer convolution(std::string name, const ConvSpec& spec, std::size_t in_h, std::size_t in_w);
    static ArchLayer tt_convolution(std::string name, const ConvSpec& spec, const RankChoice& ranks,
                                    std::size_t in_h, std::size_t in_w);
    static ArchLayer linear(std::string name, std::size_t in_features, std::size_t out_features, bool bias);
    static ArchLayer batch_norm(std::string name, std::size_t channels, std::size_t h, std::size_t w);
    static ArchLayer elementwise(std::string name, LayerKind kind, std::size_t channels, std::size_t h,
                                 std::size_t w);
    static ArchLayer max_pool(std::string name, std::size_t channels, std::size_t kernel, std::size_t stride,
                              std::size_t padding, std::size_t h, std::size_t w);
    static ArchLayer global_avg_pool(std::string name, std::size_t channels, std::size_t h, std::size_t w);
};

/// Cost of one table entry. BatchNorm contributes parameters only.
LayerCost layer_cost(const ArchLayer& layer);

struct ReportRow {
    std::string name;
    LayerKind kind;
    LayerCost cost;
    bool misaligned16 = false;  // a channel count or rank not divisible by 16
};

struct ModelReport {
    std::vector<ReportRow> rows;
    std::uint64_t total_macs = 0;
    std::uint64_t total_params = 0;
};

ModelReport model_report(const std::vector<ArchLayer>& arch);

void write_report_text(std::ostream& out, const ModelReport& report, std::string_view title);
/// Columns: layer, kind, macs, params, out_h, out_w.
void write_report_csv(std::ostream& out, const ModelReport& report);

/// Replace every conv accepted by select_ranks with its TTConv counterpart.
std::vector<ArchLayer> decompose_arch(const std::vector<ArchLayer>& arch);

/// Standard ImageNet ResNet (depth 18, 34, 50 or 101) layer table.
std::vector<ArchLayer> resnet_arch(int depth, std::size_t resolution, std::size_t num_classes = 1000);

/// The trainable desk-scale residual network (see nn::build_toy_resnet).
std::vector<ArchLayer> toy_arch(std::size_t resolution, std::size_t num_classes = 4, std::size_t in_channels = 3);

/// Preset lookup by name: resnet18, resnet34, resnet50, resnet101, toy.
std::vector<ArchLayer> arch_preset(std::string_view name, std::size_t resolution);

}  // namespace ttyard
