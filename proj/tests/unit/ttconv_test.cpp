#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "ttyard/random.hpp"
#include "ttyard/tt_format.hpp"
#include "ttyard/ttconv.hpp"

using namespace ttyard;

namespace {

TTConvFactors random_factors(const ConvSpec& spec, std::size_t r1, std::size_t r2, Rng& rng) {
    const std::size_t l = spec.kernel;
    TTConvFactors f{random_normal<double>({l, l, r1}, rng), random_normal<double>({r1, spec.in_channels, r2}, rng),
                    random_normal<double>({r2, spec.out_channels}, rng), spec, std::nullopt};
    if (spec.has_bias) {
        const auto b = random_normal<double>({spec.out_channels}, rng);
        f.bias = std::vector<double>(b.values().begin(), b.values().end());
    }
    return f;
}

}  // namespace

TEST(ConvSpec, ValidatesAndComputesExtents) {
    EXPECT_THROW((ConvSpec{0, 4, 3}).validate(), std::invalid_argument);
    EXPECT_THROW((ConvSpec{4, 4, 3, 0}).validate(), std::invalid_argument);
    EXPECT_THROW((ConvSpec{6, 4, 3, 1, 1, false, 4}).validate(), std::invalid_argument);  // C % groups
    const ConvSpec s{8, 8, 3, 2, 1};
    EXPECT_EQ(s.out_extent(8), 4u);
    EXPECT_THROW((ConvSpec{8, 8, 5}).out_extent(3), std::invalid_argument);
    EXPECT_EQ((ConvSpec{16, 4, 3, 1, 1, false, 4, true}).weight_dims(), (Shape{1, 4, 3, 3}));
    EXPECT_EQ((ConvSpec{16, 4, 3, 1, 1, false, 4, false}).weight_dims(), (Shape{4, 4, 3, 3}));
}

TEST(SelectRanks, HeuristicExamples) {
    const auto a = select_ranks({256, 256, 3, 1, 1});
    ASSERT_TRUE(a);
    EXPECT_EQ(*a, RankChoice::spatial(4, 16));
    const auto b = select_ranks({512, 512, 1});
    ASSERT_TRUE(b);
    EXPECT_EQ(*b, RankChoice::pointwise(16));
    EXPECT_FALSE(select_ranks({64, 64, 3, 1, 1}));
    EXPECT_FALSE(select_ranks({128, 64, 3, 1, 1}));  // min(C, S) rule
    EXPECT_FALSE(select_ranks({64, 256, 1}));
}

TEST(SelectRanks, RoundsNonMultiplesOf64) {
    EXPECT_EQ(select_ranks({128, 128, 3})->r1, 2u);
    EXPECT_EQ(select_ranks({160, 128, 3})->r1, 3u);  // 2.5 rounds half up
    EXPECT_EQ(select_ranks({150, 128, 3})->r1, 2u);
    EXPECT_EQ(select_ranks({1024, 2048, 3})->r1, 16u);
    EXPECT_EQ(select_ranks({128, 300, 5})->r2, 16u);
}

TEST(RankChoice, RejectsZeroRanks) {
    EXPECT_THROW(RankChoice::spatial(0, 16), std::invalid_argument);
    EXPECT_THROW(RankChoice::spatial(2, 0), std::invalid_argument);
    EXPECT_THROW(RankChoice::pointwise(0), std::invalid_argument);
}

TEST(ReconstructKernel, MatchesBruteForceSum) {
    Rng rng(1);
    const ConvSpec spec{5, 7, 3};
    const TTConvFactors f = random_factors(spec, 3, 4, rng);
    const DenseTensor k = reconstruct_kernel(f);
    EXPECT_LE(max_abs_diff(k, oracle::tt_kernel(f.g1, f.g2, f.g3)), 1e-13);

    const TTConvFactors ones{DenseTensor({3, 3, 1}, 1.0), DenseTensor({1, 5, 1}, 1.0), DenseTensor({1, 7}, 1.0), spec,
                             std::nullopt};
    EXPECT_EQ(reconstruct_kernel(ones), DenseTensor({7, 5, 3, 3}, 1.0));
}

TEST(ReconstructKernel, PointwiseIsMatrixProduct) {
    Rng rng(2);
    const ConvSpec spec{6, 4, 1};
    const LowRankFactors f{random_normal<double>({6, 3}, rng), random_normal<double>({3, 4}, rng), spec, std::nullopt};
    const DenseTensor k = reconstruct_kernel(f);
    ASSERT_EQ(k.dims(), (Shape{4, 6, 1, 1}));
    for (std::size_t s = 0; s < 4; ++s)
        for (std::size_t c = 0; c < 6; ++c) {
            double acc = 0;
            for (std::size_t r = 0; r < 3; ++r) acc += f.g1.at({c, r}) * f.g2.at({r, s});
            EXPECT_NEAR(k.at({s, c, 0, 0}), acc, 1e-14);
        }
}

TEST(FactorizeKernel, SynthesizeThenRecover) {
    Rng rng(3);
    const ConvSpec spec{128, 128, 3, 1, 1};
    const DenseTensor w = reconstruct_kernel(random_factors(spec, 2, 16, rng));
    const KernelFactors f = factorize_kernel(w, spec, RankChoice::spatial(2, 16));
    EXPECT_EQ(factor_ranks(f), RankChoice::spatial(2, 16));
    EXPECT_LE(relative_error(reconstruct_kernel(f), w), 1e-10);

    const ConvSpec pw{128, 256, 1};
    const DenseTensor wp = reconstruct_kernel(LowRankFactors{random_normal<double>({128, 16}, rng),
                                                              random_normal<double>({16, 256}, rng), pw, std::nullopt});
    EXPECT_LE(relative_error(reconstruct_kernel(factorize_kernel(wp, pw, RankChoice::pointwise(16))), wp), 1e-10);
}

TEST(FactorizeKernel, ZeroWeightGivesZeroCores) {
    const ConvSpec spec{8, 8, 3};
    const auto f = std::get<TTConvFactors>(factorize_kernel(DenseTensor(spec.weight_dims()), spec, RankChoice::spatial(2, 4)));
    for (const DenseTensor* t : {&f.g1, &f.g2, &f.g3})
        for (double v : t->values()) EXPECT_EQ(v, 0.0);
}

TEST(FactorizeKernel, ErrorEqualsTTSvdResidual) {
    Rng rng(4);
    const ConvSpec spec{128, 128, 3, 1, 1};
    const DenseTensor w = random_normal<double>(spec.weight_dims(), rng);
    std::vector<double> tail;
    const KernelFactors f = factorize_kernel(w, spec, RankChoice::spatial(2, 16), std::nullopt, &tail);
    double tail_sq = 0;
    for (double t : tail) tail_sq += t * t;
    const double err = relative_error(reconstruct_kernel(f), w) * oracle::frobenius(w);
    EXPECT_NEAR(err, std::sqrt(tail_sq), 1e-9 * std::sqrt(tail_sq));

    // same residual as running TT-SVD on the (l^2, C, S) arrangement directly
    DenseTensor t({9, 128, 128});
    for (std::size_t s = 0; s < 128; ++s)
        for (std::size_t c = 0; c < 128; ++c)
            for (std::size_t i = 0; i < 3; ++i)
                for (std::size_t j = 0; j < 3; ++j) t.at({i * 3 + j, c, s}) = w.at({s, c, i, j});
    const double direct = relative_error(tt_reconstruct(tt_svd(t, {std::vector<std::size_t>{2, 16}, std::nullopt})), t);
    EXPECT_NEAR(relative_error(reconstruct_kernel(f), w), direct, 1e-12);
}

TEST(FactorizeKernel, CapsRanksAboveUnfoldingRank) {
    Rng rng(5);
    const ConvSpec spec{4, 3, 3};
    const KernelFactors f = factorize_kernel(random_normal<double>(spec.weight_dims(), rng), spec, RankChoice::spatial(20, 16));
    const RankChoice r = factor_ranks(f);
    EXPECT_LE(r.r1, 9u);
    EXPECT_LE(r.r2, 3u);
}

TEST(FactorizeKernel, IsAProjection) {
    Rng rng(6);
    for (const ConvSpec& spec : {ConvSpec{128, 128, 3, 1, 1}, ConvSpec{256, 128, 1}}) {
        const RankChoice ranks = *select_ranks(spec);
        const DenseTensor once = reconstruct_kernel(factorize_kernel(random_normal<double>(spec.weight_dims(), rng), spec, ranks));
        const DenseTensor twice = reconstruct_kernel(factorize_kernel(once, spec, ranks));
        EXPECT_LE(relative_error(twice, once), 1e-12);
    }
}

TEST(FactorizeKernel, RejectsMismatchedInputs) {
    const ConvSpec spec{8, 8, 3};
    EXPECT_THROW(factorize_kernel(DenseTensor({8, 8, 1, 1}), spec, RankChoice::spatial(2, 2)), std::invalid_argument);
    EXPECT_THROW(factorize_kernel(DenseTensor(spec.weight_dims()), spec, RankChoice::pointwise(2)), std::invalid_argument);
    EXPECT_THROW(factorize_kernel(DenseTensor(spec.weight_dims()), spec, RankChoice::spatial(2, 2), std::vector<double>(3)),
                 std::invalid_argument);
}

TEST(ChannelLayout, GroupMajorBijection) {
    const std::size_t R1 = 3, R2 = 5;
    std::vector<int> seen(R1 * R2, 0);
    for (std::size_t a = 0; a < R1; ++a)
        for (std::size_t b = 0; b < R2; ++b) {
            const std::size_t ch = group_major_channel(a, b, R1);
            ASSERT_LT(ch, R1 * R2);
            ++seen[ch];
            EXPECT_EQ(ch / R1, b);  // group b reads a contiguous block
            const RankPair back = split_group_major_channel(ch, R1);
            EXPECT_EQ(back.r1, a);
            EXPECT_EQ(back.r2, b);
        }
    for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(Lower, StageLayoutAndSharing) {
    Rng rng(7);
    const ConvSpec spec{6, 5, 3, 2, 1, true};
    const TTConvFactors f = random_factors(spec, 2, 3, rng);
    const auto plan = std::get<ThreeConvPlan>(lower(f));
    EXPECT_EQ(plan.pointwise_in.spec, (ConvSpec{6, 6, 1, 1, 0, false, 1, false}));
    EXPECT_EQ(plan.grouped.spec, (ConvSpec{6, 3, 3, 2, 1, false, 3, true}));
    EXPECT_EQ(plan.grouped.weight.dims(), (Shape{1, 2, 3, 3}));
    EXPECT_EQ(plan.pointwise_out.spec, (ConvSpec{3, 5, 1, 1, 0, true, 1, false}));
    EXPECT_FALSE(plan.pointwise_in.bias);
    ASSERT_TRUE(plan.pointwise_out.bias);
    for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 3; ++b)
            for (std::size_t c = 0; c < 6; ++c)
                EXPECT_EQ(plan.pointwise_in.weight.at({b * 2 + a, c, 0, 0}), f.g2.at({a, c, b}));
    for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(plan.grouped.weight.at({0, a, i, j}), f.g1.at({i, j, a}));
    for (std::size_t s = 0; s < 5; ++s)
        for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(plan.pointwise_out.weight.at({s, b, 0, 0}), f.g3.at({b, s}));
    EXPECT_EQ(plan_param_count(lower(f)), 6u * 6 + 2 * 9 + 3 * 5 + 5);
}

TEST(Lower, PointwiseStrideOnFirstStage) {
    Rng rng(8);
    const ConvSpec spec{6, 4, 1, 2, 0, true};
    const LowRankFactors f{random_normal<double>({6, 3}, rng), random_normal<double>({3, 4}, rng), spec,
                           std::vector<double>{1, 2, 3, 4}};
    const auto plan = std::get<TwoConvPlan>(lower(f));
    EXPECT_EQ(plan.reduce.spec.stride, 2u);
    EXPECT_EQ(plan.expand.spec.stride, 1u);
    EXPECT_TRUE(plan.expand.bias);
    const DenseTensor x = random_normal<double>({2, 6, 7, 7}, rng);
    const DenseTensor dense = oracle::conv(x, reconstruct_kernel(f), 4, 2, 0, 1, false, &*f.bias);
    const DenseTensor out = execute_plan(lower(f), x);
    EXPECT_EQ(out.dims(), dense.dims());
    EXPECT_LE(max_abs_diff(out, dense), 1e-12);
}

TEST(ReferenceConv, AgreesWithOracleIncludingSharedGroups) {
    Rng rng(9);
    for (const ConvSpec& spec : {ConvSpec{4, 6, 3, 1, 1, true}, ConvSpec{6, 4, 3, 2, 0}, ConvSpec{8, 4, 3, 1, 1, false, 4, false},
                                 ConvSpec{8, 4, 3, 2, 1, false, 4, true}}) {
        const DenseTensor x = random_normal<double>({2, spec.in_channels, 6, 5}, rng);
        const DenseTensor w = random_normal<double>(spec.weight_dims(), rng);
        std::optional<std::vector<double>> bias;
        if (spec.has_bias) bias = std::vector<double>(spec.out_channels, 0.5);
        std::uint64_t ours = 0, theirs = 0;
        const DenseTensor y = reference_conv2d(x, w, spec, bias, &ours);
        const DenseTensor z = oracle::conv(x, w, spec.out_channels, spec.stride, spec.padding, spec.groups,
                                           spec.shared_group_kernel, bias ? &*bias : nullptr, &theirs);
        EXPECT_LE(max_abs_diff(y, z), 1e-12) << to_string(spec);
        EXPECT_EQ(ours, theirs);
    }
}

struct LoweringCase {
    std::size_t C, S, l, stride, pad;
};

class LoweringEquivalence : public ::testing::TestWithParam<LoweringCase> {};

TEST_P(LoweringEquivalence, PlanEqualsDenseConvWithReconstructedKernel) {
    const auto p = GetParam();
    Rng rng(100 + p.C + p.S + p.l + p.stride);
    const ConvSpec spec{p.C, p.S, p.l, p.stride, p.pad, true};
    const DenseTensor x = random_normal<double>({1, p.C, 8, 8}, rng);
    KernelFactors f;
    if (p.l == 1) {
        f = LowRankFactors{random_normal<double>({p.C, 16}, rng), random_normal<double>({16, p.S}, rng), spec,
                           std::vector<double>(p.S, -0.5)};
    } else {
        f = random_factors(spec, std::max<std::size_t>(1, p.C / 64), 16, rng);
    }
    const auto bias = std::visit([](const auto& v) { return v.bias; }, f);
    const DenseTensor dense = oracle::conv(x, reconstruct_kernel(f), p.S, p.stride, p.pad, 1, false, &*bias);
    const DenseTensor plan = execute_plan(lower(f), x);
    ASSERT_EQ(plan.dims(), dense.dims());
    EXPECT_LE(max_abs_diff(plan, dense), 1e-10);
}

INSTANTIATE_TEST_SUITE_P(Configs, LoweringEquivalence,
                         ::testing::Values(LoweringCase{128, 128, 3, 1, 1}, LoweringCase{128, 128, 3, 2, 1},
                                           LoweringCase{128, 256, 3, 1, 0}, LoweringCase{256, 128, 3, 2, 1},
                                           LoweringCase{128, 128, 1, 1, 0}, LoweringCase{256, 128, 1, 2, 0},
                                           LoweringCase{128, 256, 5, 2, 2}));

TEST(Lower, SinglePrecisionEquivalence) {
    Rng rng(10);
    const ConvSpec spec{128, 128, 3, 1, 1};
    const TTConvFactors f = random_factors(spec, 2, 16, rng);
    const auto x32 = random_normal<float>({1, 128, 6, 6}, rng);
    // round every factor to f32 first so both sides see identical operands
    TTConvFactors g = f;
    g.g1 = f.g1.cast<float>().cast<double>();
    g.g2 = f.g2.cast<float>().cast<double>();
    g.g3 = f.g3.cast<float>().cast<double>();
    const auto plan = execute_plan(lower(g), x32.cast<double>()).cast<float>();
    const auto dense = oracle::conv(x32.cast<double>(), reconstruct_kernel(g).cast<float>().cast<double>(), 128, 1, 1).cast<float>();
    EXPECT_LE(max_abs_diff(plan, dense), 1e-3);
}

TEST(HeuristicReduction, PlanParamsBelowDenseForEveryApplicableSpec) {
    Rng rng(11);
    for (std::size_t C : {128u, 256u, 512u})
        for (std::size_t S : {128u, 256u, 512u})
            for (std::size_t l : {1u, 3u}) {
                const ConvSpec spec{C, S, l, 1, l / 2};
                const auto ranks = select_ranks(spec);
                ASSERT_TRUE(ranks);
                KernelFactors f;
                if (l == 1) {
                    f = LowRankFactors{DenseTensor({C, ranks->r}), DenseTensor({ranks->r, S}), spec, std::nullopt};
                } else {
                    f = TTConvFactors{DenseTensor({l, l, ranks->r1}), DenseTensor({ranks->r1, C, ranks->r2}),
                                      DenseTensor({ranks->r2, S}), spec, std::nullopt};
                }
                EXPECT_LT(plan_param_count(lower(f)), spec.weight_count()) << to_string(spec);
            }
}
