#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ttyard/tensor.hpp"

namespace ttyard {

/**
 * Square 2-D convolution, input channels C to output channels S.
 *
 * groups / shared_group_kernel describe the grouped middle stage of a
 * lowered TTConv; a dense convolution keeps groups == 1. With a shared
 * group kernel a single (S/groups, C/groups, l, l) kernel serves every group.
 */
struct ConvSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    bool has_bias = false;
    std::size_t groups = 1;
    bool shared_group_kernel = false;

    void validate() const;

    /// floor((in + 2p - l) / stride) + 1; throws when the result is not positive.
    std::size_t out_extent(std::size_t in) const;

    /// Dims of the stored weight tensor.
    Shape weight_dims() const;

    std::size_t weight_count() const { return shape_size(weight_dims()); }

    bool operator==(const ConvSpec&) const = default;
};

std::string to_string(const ConvSpec& spec);

inline constexpr std::size_t kMinDecomposableChannels = 128;
inline constexpr std::size_t kSpatialRank2 = 16;
inline constexpr std::size_t kPointwiseRank = 16;

enum class RankKind { spatial, pointwise };

struct RankChoice {
    RankKind kind = RankKind::spatial;
    std::size_t r1 = 0;  // spatial only
    std::size_t r2 = 0;  // spatial only
    std::size_t r = 0;   // pointwise only

    static RankChoice spatial(std::size_t r1, std::size_t r2);
    static RankChoice pointwise(std::size_t r);

    bool operator==(const RankChoice&) const = default;
};

std::string to_string(const RankChoice& ranks);

/**
 * Hardware-friendly rank heuristic.
 *
 * Layers with fewer than 128 channels on either side are left dense. l x l
 * kernels (l >= 2) get R2 = 16 and R1 = round(C / 64) (at least 1); 1 x 1
 * kernels get the low-rank rank R = 16.
 */
std::optional<RankChoice> select_ranks(const ConvSpec& spec);

/// Three-core TTConv factors: kernel[s,c,i,j] = sum G1[i,j,r1] G2[r1,c,r2] G3[r2,s].
struct TTConvFactors {
    DenseTensor g1;  // (l, l, R1)
    DenseTensor g2;  // (R1, C, R2)
    DenseTensor g3;  // (R2, S)
    ConvSpec spec;
    std::optional<std::vector<double>> bias;

    std::size_t rank1() const { return g1.dim(2); }
    std::size_t rank2() const { return g3.dim(0); }
    void validate() const;
};

/// 1 x 1 low-rank factors: kernel[s,c] = sum G1[c,r] G2[r,s].
struct LowRankFactors {
    DenseTensor g1;  // (C, R)
    DenseTensor g2;  // (R, S)
    ConvSpec spec;
    std::optional<std::vector<double>> bias;

    std::size_t rank() const { return g1.dim(1); }
    void validate() const;
};

using KernelFactors = std::variant<TTConvFactors, LowRankFactors>;

/// Ranks actually carried by a set of factors (after any capping).
RankChoice factor_ranks(const KernelFactors& factors);

/**
 * Decompose a dense (S, C, l, l) kernel at the given ranks.
 *
 * Ranks above the full rank of an unfolding are capped; the returned
 * factors carry the capped ranks. When `discarded_tail` is given it
 * receives the Frobenius norm of the singular values dropped at each SVD.
 */
KernelFactors factorize_kernel(const DenseTensor& weight, const ConvSpec& spec, const RankChoice& ranks,
                               std::optional<std::vector<double>> bias = std::nullopt,
                               std::vector<double>* discarded_tail = nullptr);

DenseTensor reconstruct_kernel(const KernelFactors& factors);

struct PlanStage {
    ConvSpec spec;
    DenseTensor weight;  // spec.weight_dims()
    std::optional<std::vector<double>> bias;
};

/**
 * Pointwise C -> R1*R2, shared-kernel group conv R1*R2 -> R2 (groups = R2,
 * original stride and padding), pointwise R2 -> S with the bias.
 *
 * Channel (r1, r2) of the first stage lives at r2 * R1 + r1, so group r2 of
 * the middle stage reads the contiguous block [r2 * R1, (r2 + 1) * R1).
 */
struct ThreeConvPlan {
    PlanStage pointwise_in;
    PlanStage grouped;
    PlanStage pointwise_out;
    std::size_t rank1 = 0;
    std::size_t rank2 = 0;
};

/// 1 x 1 low-rank lowering: C -> R (original stride and padding), R -> S with the bias.
struct TwoConvPlan {
    PlanStage reduce;
    PlanStage expand;
    std::size_t rank = 0;
};

using ConvPlan = std::variant<ThreeConvPlan, TwoConvPlan>;

inline std::size_t group_major_channel(std::size_t r1, std::size_t r2, std::size_t rank1) {
    return r2 * rank1 + r1;
}

struct RankPair {
    std::size_t r1;
    std::size_t r2;
};

inline RankPair split_group_major_channel(std::size_t channel, std::size_t rank1) {
    return {channel % rank1, channel / rank1};
}

ConvPlan lower(const KernelFactors& factors);

std::vector<const PlanStage*> plan_stages(const ConvPlan& plan);

std::size_t plan_param_count(const ConvPlan& plan);

/**
 * Direct-loop reference convolution on an NCHW tensor.
 *
 * Zero padding taps are multiplied like any other, so `mac_counter` (when
 * given) is incremented once per multiply-accumulate including padding.
 */
DenseTensor reference_conv2d(const DenseTensor& input, const DenseTensor& weight, const ConvSpec& spec,
                             const std::optional<std::vector<double>>& bias = std::nullopt,
                             std::uint64_t* mac_counter = nullptr);

/// Run every stage of a plan through reference_conv2d.
DenseTensor execute_plan(const ConvPlan& plan, const DenseTensor& input, std::uint64_t* mac_counter = nullptr);

}  // namespace ttyard
