#include <gtest/gtest.h>

#include <sstream>

#include "ttyard/cost_model.hpp"
#include "ttyard/nn/model.hpp"
#include "ttyard/random.hpp"

using namespace ttyard;

namespace {

std::uint64_t counted_dense_macs(const ConvSpec& spec, std::size_t h, std::size_t w) {
    const DenseTensor x({1, spec.in_channels, h, w}, 1.0);
    const DenseTensor k(spec.weight_dims(), 1.0);
    std::uint64_t macs = 0;
    reference_conv2d(x, k, spec, std::nullopt, &macs);
    return macs;
}

KernelFactors zero_factors(const ConvSpec& spec, const RankChoice& r) {
    std::optional<std::vector<double>> bias;
    if (spec.has_bias) bias = std::vector<double>(spec.out_channels, 0.0);
    if (r.kind == RankKind::pointwise)
        return LowRankFactors{DenseTensor({spec.in_channels, r.r}), DenseTensor({r.r, spec.out_channels}), spec, bias};
    return TTConvFactors{DenseTensor({spec.kernel, spec.kernel, r.r1}), DenseTensor({r.r1, spec.in_channels, r.r2}),
                         DenseTensor({r.r2, spec.out_channels}), spec, bias};
}

}  // namespace

TEST(CostDense, WorkedExamples) {
    const LayerCost c = cost_dense({256, 256, 3, 1, 1}, 14, 14);
    EXPECT_EQ(c.macs, 115'605'504u);
    EXPECT_EQ(c.params, 589'824u);
    EXPECT_EQ(cost_dense({16, 16, 1}, 1, 1).macs, 256u);
    const LayerCost s = cost_dense({8, 8, 3, 2, 1}, 8, 8);
    EXPECT_EQ(s.out_h, 4u);
    EXPECT_EQ(s.out_w, 4u);
    EXPECT_EQ(cost_dense({8, 8, 3, 1, 0, true}, 5, 5).params, 8u * 8 * 9 + 8);
    EXPECT_THROW(cost_dense({8, 8, 5}, 3, 3), std::invalid_argument);
}

TEST(CostTTConv, WorkedExamples) {
    const LayerCost c = cost_ttconv({256, 256, 3, 1, 1}, RankChoice::spatial(4, 16), 14, 14);
    EXPECT_EQ(c.macs, 3'211'264u + 112'896u + 802'816u);
    EXPECT_EQ(c.macs, 4'126'976u);
    EXPECT_EQ(c.params, 16'384u + 36u + 4'096u);
    const LayerCost d = cost_ttconv({128, 128, 3, 1, 1}, RankChoice::spatial(2, 16), 8, 8);
    EXPECT_EQ(d.params, 6'162u);
    EXPECT_LT(d.params, 147'456u);
    const LayerCost e = cost_ttconv({1, 1, 1}, RankChoice::pointwise(1), 3, 3);
    EXPECT_EQ(e.macs, 9u * 2);
    EXPECT_EQ(e.params, 2u);
}

TEST(CostTTConv, ClosedFormParams) {
    for (std::size_t C : {128u, 192u, 256u})
        for (std::size_t S : {128u, 256u})
            for (std::size_t l : {3u, 5u})
                for (std::size_t r1 : {1u, 2u, 4u})
                    for (std::size_t r2 : {8u, 16u}) {
                        const LayerCost c = cost_ttconv({C, S, l, 1, l / 2}, RankChoice::spatial(r1, r2), 7, 7);
                        EXPECT_EQ(c.params, C * r1 * r2 + r1 * l * l + r2 * S);
                    }
}

struct SmallConfig {
    ConvSpec spec;
    RankChoice ranks;
    std::size_t h, w;
};

TEST(CostModel, MacsEqualInstrumentedLoopCount) {
    const std::vector<SmallConfig> cases = {
        {{4, 6, 3, 1, 1}, RankChoice::spatial(2, 3), 5, 5},   {{4, 6, 3, 2, 1}, RankChoice::spatial(2, 3), 7, 6},
        {{6, 4, 3, 2, 0}, RankChoice::spatial(3, 2), 9, 9},   {{5, 5, 5, 1, 2}, RankChoice::spatial(1, 4), 6, 6},
        {{8, 4, 1, 1, 0}, RankChoice::pointwise(3), 4, 4},    {{8, 4, 1, 2, 0}, RankChoice::pointwise(2), 5, 5},
        {{3, 7, 3, 1, 0, true}, RankChoice::spatial(2, 2), 4, 5}, {{6, 6, 3, 3, 1}, RankChoice::spatial(2, 2), 8, 8},
        {{2, 2, 1, 1, 0}, RankChoice::pointwise(1), 1, 1},    {{4, 4, 3, 1, 1}, RankChoice::spatial(1, 1), 3, 3},
    };
    for (const auto& c : cases) {
        EXPECT_EQ(cost_dense(c.spec, c.h, c.w).macs, counted_dense_macs(c.spec, c.h, c.w)) << to_string(c.spec);
        std::uint64_t counted = 0;
        execute_plan(lower(zero_factors(c.spec, c.ranks)), DenseTensor({1, c.spec.in_channels, c.h, c.w}), &counted);
        const LayerCost tt = cost_ttconv(c.spec, c.ranks, c.h, c.w);
        EXPECT_EQ(tt.macs, counted) << to_string(c.spec);
        EXPECT_EQ(tt.params, plan_param_count(lower(zero_factors(c.spec, c.ranks)))) << to_string(c.spec);
    }
}

TEST(CostModel, TTConvEqualsSumOfLoweredStages) {
    for (const SmallConfig& c : std::vector<SmallConfig>{{{128, 128, 3, 1, 1}, RankChoice::spatial(2, 16), 8, 8},
                                                         {{256, 128, 3, 2, 1, true}, RankChoice::spatial(4, 16), 9, 9},
                                                         {{128, 256, 1, 2, 0}, RankChoice::pointwise(16), 8, 8}}) {
        LayerCost sum;
        std::size_t h = c.h, w = c.w;
        const ConvPlan plan = lower(zero_factors(c.spec, c.ranks));
        for (const PlanStage* st : plan_stages(plan)) {
            const LayerCost sc = cost_dense(st->spec, h, w);
            sum.macs += sc.macs;
            sum.params += sc.params;
            h = sc.out_h;
            w = sc.out_w;
        }
        const LayerCost tt = cost_ttconv(c.spec, c.ranks, c.h, c.w);
        EXPECT_EQ(tt.macs, sum.macs);
        EXPECT_EQ(tt.params, sum.params);
        EXPECT_EQ(tt.out_h, h);
        EXPECT_EQ(tt.out_w, w);
    }
}

TEST(CostModel, HeuristicTTConvCheaperThanDense) {
    for (std::size_t C : {128u, 256u, 512u, 1024u})
        for (std::size_t S : {128u, 256u, 512u, 2048u})
            for (std::size_t l : {1u, 3u})
                for (std::size_t stride : {1u, 2u}) {
                    const ConvSpec spec{C, S, l, stride, l / 2};
                    const LayerCost d = cost_dense(spec, 14, 14);
                    const LayerCost t = cost_ttconv(spec, *select_ranks(spec), 14, 14);
                    EXPECT_LT(t.params, d.params) << to_string(spec);
                    EXPECT_LT(t.macs, d.macs) << to_string(spec);
                }
}

TEST(ModelReport, SingleConvEqualsCostDense) {
    const ConvSpec spec{64, 32, 3, 2, 1};
    const ModelReport r = model_report({ArchLayer::convolution("c", spec, 20, 20)});
    const LayerCost d = cost_dense(spec, 20, 20);
    EXPECT_EQ(r.total_macs, d.macs);
    EXPECT_EQ(r.total_params, d.params);
}

TEST(ModelReport, BatchNormAndElementwiseAreParamsOnly) {
    const ModelReport r = model_report({ArchLayer::batch_norm("bn", 16, 8, 8),
                                        ArchLayer::elementwise("relu", LayerKind::relu, 16, 8, 8),
                                        ArchLayer::global_avg_pool("pool", 16, 8, 8), ArchLayer::linear("fc", 16, 10, true)});
    EXPECT_EQ(r.total_params, 32u + 16 * 10 + 10);
    EXPECT_EQ(r.total_macs, 160u);
}

TEST(ModelReport, ToyTotalsEqualHandSum) {
    // res 16: stem 16x16, down1 8x8, down2 4x4, block1 4x4, block2/block3 2x2
    const std::uint64_t macs = 256ull * 32 * 3 * 9 + 64ull * 64 * 32 * 9 + 16ull * 128 * 64 * 9 +
                               2 * 16ull * 128 * 128 * 9 + 4ull * 256 * 128 * 9 + 4ull * 256 * 256 * 9 +
                               4ull * 256 * 128 + 2 * 4ull * 256 * 256 * 9 + 256ull * 4;
    const std::uint64_t conv_params = 3ull * 32 * 9 + 32ull * 64 * 9 + 64ull * 128 * 9 + 2 * 128ull * 128 * 9 +
                                      128ull * 256 * 9 + 256ull * 256 * 9 + 128ull * 256 + 2 * 256ull * 256 * 9;
    const std::uint64_t bn_params = 2ull * (32 + 64 + 128 + 2 * 128 + 3 * 256 + 2 * 256);
    const ModelReport r = model_report(toy_arch(16));
    EXPECT_EQ(r.total_macs, macs);
    EXPECT_EQ(r.total_macs, 15'688'704u);
    EXPECT_EQ(r.total_params, conv_params + bn_params + 256 * 4 + 4);
    std::uint64_t row_sum = 0;
    for (const auto& row : r.rows) row_sum += row.cost.macs;
    EXPECT_EQ(row_sum, r.total_macs);
}

TEST(ModelReport, ToyEligibleLayerCount) {
    std::size_t eligible = 0;
    for (const auto& l : toy_arch(16))
        if (l.kind == LayerKind::conv && select_ranks(l.conv)) ++eligible;
    EXPECT_EQ(eligible, 7u);
    const auto dec = decompose_arch(toy_arch(16));
    std::size_t tt = 0;
    for (const auto& l : dec) tt += l.kind == LayerKind::ttconv;
    EXPECT_EQ(tt, 7u);
    EXPECT_LT(model_report(dec).total_params, model_report(toy_arch(16)).total_params);
}

TEST(ModelReport, MisalignmentFlag) {
    const ModelReport r = model_report({ArchLayer::convolution("a", {3, 32, 3, 1, 1}, 8, 8),
                                        ArchLayer::convolution("b", {32, 64, 3, 1, 1}, 8, 8)});
    EXPECT_TRUE(r.rows[0].misaligned16);
    EXPECT_FALSE(r.rows[1].misaligned16);
}

TEST(LayerKind, RoundTripAndUnknownRejected) {
    for (LayerKind k : {LayerKind::conv, LayerKind::ttconv, LayerKind::linear, LayerKind::batchnorm, LayerKind::relu,
                        LayerKind::max_pool, LayerKind::global_avg_pool, LayerKind::add})
        EXPECT_EQ(layer_kind_from_string(to_string(k)), k);
    EXPECT_THROW(layer_kind_from_string("deformable_conv"), std::invalid_argument);
    EXPECT_THROW(arch_preset("vgg16", 224), std::invalid_argument);
}

TEST(ResNetPresets, ResNet18LayerShapes) {
    const auto arch = resnet_arch(18, 224);
    std::size_t convs = 0;
    for (const auto& l : arch) convs += l.kind == LayerKind::conv;
    EXPECT_EQ(convs, 20u);  // stem + 16 block convs + 3 projections
    EXPECT_EQ(arch.front().conv, (ConvSpec{3, 64, 7, 2, 3}));
    EXPECT_EQ(arch.back().kind, LayerKind::linear);
    EXPECT_EQ(arch.back().in_features, 512u);
    EXPECT_THROW(resnet_arch(20, 224), std::invalid_argument);
}

TEST(ReportOutput, CsvHasHeaderAndOneRowPerLayer) {
    const auto arch = toy_arch(16);
    std::ostringstream out;
    write_report_csv(out, model_report(arch));
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "layer,kind,macs,params,out_h,out_w");
    std::size_t rows = 0;
    while (std::getline(in, line)) rows += !line.empty();
    EXPECT_EQ(rows, arch.size());
}

TEST(ModelDescribe, ToyModelMatchesToyArch) {
    Rng rng(3);
    const auto model = nn::build_toy_resnet<float>(rng, 16);
    const auto got = model.describe();
    const auto want = toy_arch(16);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_EQ(got[i].name, want[i].name);
        EXPECT_EQ(got[i].kind, want[i].kind) << want[i].name;
        EXPECT_EQ(layer_cost(got[i]), layer_cost(want[i])) << want[i].name;
    }
}
