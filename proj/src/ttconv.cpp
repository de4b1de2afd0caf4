#include "ttyard/ttconv.hpp"

#include <cmath>
#include <stdexcept>

#include "ttyard/linalg.hpp"
#include "ttyard/tt_format.hpp"

namespace ttyard {

void ConvSpec::validate() const {
    if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1 || groups < 1) {
        throw std::invalid_argument("invalid conv spec " + to_string(*this));
    }
    if (in_channels % groups != 0 || out_channels % groups != 0) {
        throw std::invalid_argument("conv spec " + to_string(*this) + ": channels not divisible by groups");
    }
}

std::size_t ConvSpec::out_extent(std::size_t in) const {
    const auto padded = static_cast<long long>(in) + 2 * static_cast<long long>(padding);
    const auto k = static_cast<long long>(kernel);
    if (padded < k) {
        throw std::invalid_argument("conv " + to_string(*this) + " yields a non-positive output extent for input " +
                                    std::to_string(in));
    }
    return static_cast<std::size_t>((padded - k) / static_cast<long long>(stride)) + 1;
}

Shape ConvSpec::weight_dims() const {
    const std::size_t out = shared_group_kernel ? out_channels / groups : out_channels;
    return {out, in_channels / groups, kernel, kernel};
}

std::string to_string(const ConvSpec& s) {
    std::string out = "conv(" + std::to_string(s.in_channels) + "->" + std::to_string(s.out_channels) + ", " +
                      std::to_string(s.kernel) + "x" + std::to_string(s.kernel) + ", stride " +
                      std::to_string(s.stride) + ", pad " + std::to_string(s.padding);
    if (s.groups > 1) out += ", groups " + std::to_string(s.groups) + (s.shared_group_kernel ? " shared" : "");
    if (s.has_bias) out += ", bias";
    return out + ")";
}

RankChoice RankChoice::spatial(std::size_t r1, std::size_t r2) {
    if (r1 < 1 || r2 < 1) throw std::invalid_argument("spatial ranks must be >= 1");
    return RankChoice{RankKind::spatial, r1, r2, 0};
}

RankChoice RankChoice::pointwise(std::size_t r) {
    if (r < 1) throw std::invalid_argument("pointwise rank must be >= 1");
    return RankChoice{RankKind::pointwise, 0, 0, r};
}

std::string to_string(const RankChoice& ranks) {
    if (ranks.kind == RankKind::pointwise) return "R=" + std::to_string(ranks.r);
    return "R1=" + std::to_string(ranks.r1) + ",R2=" + std::to_string(ranks.r2);
}

std::optional<RankChoice> select_ranks(const ConvSpec& spec) {
    spec.validate();
    if (spec.groups != 1) return std::nullopt;
    if (std::min(spec.in_channels, spec.out_channels) < kMinDecomposableChannels) return std::nullopt;
    if (spec.kernel == 1) return RankChoice::pointwise(kPointwiseRank);
    // R1 = C / (4 * R2), rounded to nearest
    const std::size_t denom = 4 * kSpatialRank2;
    const std::size_t r1 = std::max<std::size_t>(1, (spec.in_channels + denom / 2) / denom);
    return RankChoice::spatial(r1, kSpatialRank2);
}

namespace {

void check_bias(const std::optional<std::vector<double>>& bias, std::size_t out_channels) {
    if (bias && bias->size() != out_channels) {
        throw std::invalid_argument("bias has " + std::to_string(bias->size()) + " entries, expected " +
                                    std::to_string(out_channels));
    }
}

void expect_dims(const DenseTensor& t, const Shape& dims, const char* what) {
    if (t.dims() != dims) {
        throw std::invalid_argument(std::string(what) + " has dims " + shape_to_string(t.dims()) + ", expected " +
                                    shape_to_string(dims));
    }
    if (!t.all_finite()) throw std::invalid_argument(std::string(what) + " has non-finite entries");
}

}  // namespace

void TTConvFactors::validate() const {
    spec.validate();
    if (g1.ndim() != 3 || g3.ndim() != 2) throw std::invalid_argument("TTConv cores have wrong rank");
    const std::size_t l = spec.kernel, r1 = g1.dim(2), r2 = g3.dim(0);
    expect_dims(g1, {l, l, r1}, "G1");
    expect_dims(g2, {r1, spec.in_channels, r2}, "G2");
    expect_dims(g3, {r2, spec.out_channels}, "G3");
    check_bias(bias, spec.out_channels);
}

void LowRankFactors::validate() const {
    spec.validate();
    if (spec.kernel != 1) throw std::invalid_argument("low-rank factors require a 1x1 kernel");
    if (g1.ndim() != 2) throw std::invalid_argument("low-rank G1 must be a matrix");
    const std::size_t r = g1.dim(1);
    expect_dims(g1, {spec.in_channels, r}, "G1");
    expect_dims(g2, {r, spec.out_channels}, "G2");
    check_bias(bias, spec.out_channels);
}

RankChoice factor_ranks(const KernelFactors& factors) {
    if (const auto* tt = std::get_if<TTConvFactors>(&factors)) return RankChoice::spatial(tt->rank1(), tt->rank2());
    return RankChoice::pointwise(std::get<LowRankFactors>(factors).rank());
}

KernelFactors factorize_kernel(const DenseTensor& weight, const ConvSpec& spec, const RankChoice& ranks,
                               std::optional<std::vector<double>> bias, std::vector<double>* discarded_tail) {
    spec.validate();
    if (spec.groups != 1) throw std::invalid_argument("factorize_kernel: only dense convolutions can be factorized");
    const std::size_t S = spec.out_channels, C = spec.in_channels, l = spec.kernel;
    expect_dims(weight, {S, C, l, l}, "conv weight");
    check_bias(bias, S);

    if (ranks.kind == RankKind::spatial) {
        if (l < 2) throw std::invalid_argument("factorize_kernel: spatial ranks need a kernel of size >= 2");
        // T[(i, j), c, s] = K[s, c, i, j]
        DenseTensor t({l * l, C, S});
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t ij = 0; ij < l * l; ++ij) t[(ij * C + c) * S + s] = weight[(s * C + c) * l * l + ij];

        std::vector<double> tail;
        const TTFormat tt = tt_svd(t, TTSvdOptions{std::vector<std::size_t>{ranks.r1, ranks.r2}, std::nullopt}, tail);
        if (discarded_tail) *discarded_tail = tail;
        const std::size_t r1 = tt.ranks()[1], r2 = tt.ranks()[2];

        TTConvFactors out{tt.core(0).reshaped({l, l, r1}), tt.core(1), tt.core(2).reshaped({r2, S}), spec,
                          std::move(bias)};
        out.spec.has_bias = out.bias.has_value();
        return out;
    }

    if (l != 1) throw std::invalid_argument("factorize_kernel: pointwise rank needs a 1x1 kernel");
    if (ranks.r < 1) throw std::invalid_argument("factorize_kernel: rank must be >= 1");
    DenseTensor m({C, S});
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t c = 0; c < C; ++c) m[c * S + s] = weight[s * C + c];
    const SvdResult dec = svd(m);
    const std::size_t full = dec.singular_values.size();
    const std::size_t r = std::min(ranks.r, full);
    if (discarded_tail) {
        double tail = 0.0;
        for (std::size_t i = r; i < full; ++i) tail += dec.singular_values[i] * dec.singular_values[i];
        *discarded_tail = {std::sqrt(tail)};
    }

    LowRankFactors out{DenseTensor({C, r}), DenseTensor({r, S}), spec, std::move(bias)};
    out.spec.has_bias = out.bias.has_value();
    for (std::size_t k = 0; k < r; ++k) {
        const double root = std::sqrt(dec.singular_values[k]);
        for (std::size_t c = 0; c < C; ++c) out.g1[c * r + k] = dec.u[c * full + k] * root;
        for (std::size_t s = 0; s < S; ++s) out.g2[k * S + s] = root * dec.v[s * full + k];
    }
    return out;
}

DenseTensor reconstruct_kernel(const KernelFactors& factors) {
    if (const auto* tt = std::get_if<TTConvFactors>(&factors)) {
        tt->validate();
        const std::size_t S = tt->spec.out_channels, C = tt->spec.in_channels, l = tt->spec.kernel;
        const std::size_t r1 = tt->rank1(), r2 = tt->rank2(), taps = l * l;
        // H[(i,j), c, r2] = sum_r1 G1[i,j,r1] G2[r1,c,r2], then contract r2 with G3
        std::vector<double> h(taps * C * r2, 0.0);
        for (std::size_t ij = 0; ij < taps; ++ij)
            for (std::size_t a = 0; a < r1; ++a) {
                const double g = tt->g1[ij * r1 + a];
                for (std::size_t cb = 0; cb < C * r2; ++cb) h[ij * C * r2 + cb] += g * tt->g2[a * C * r2 + cb];
            }
        DenseTensor kernel({S, C, l, l});
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t ij = 0; ij < taps; ++ij) {
                    double acc = 0.0;
                    for (std::size_t b = 0; b < r2; ++b) acc += h[(ij * C + c) * r2 + b] * tt->g3[b * S + s];
                    kernel[(s * C + c) * taps + ij] = acc;
                }
        return kernel;
    }
    const auto& lr = std::get<LowRankFactors>(factors);
    lr.validate();
    const std::size_t S = lr.spec.out_channels, C = lr.spec.in_channels, r = lr.rank();
    DenseTensor kernel({S, C, 1, 1});
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t c = 0; c < C; ++c) {
            double acc = 0.0;
            for (std::size_t k = 0; k < r; ++k) acc += lr.g1[c * r + k] * lr.g2[k * S + s];
            kernel[s * C + c] = acc;
        }
    return kernel;
}

ConvPlan lower(const KernelFactors& factors) {
    if (const auto* tt = std::get_if<TTConvFactors>(&factors)) {
        tt->validate();
        const ConvSpec& orig = tt->spec;
        const std::size_t C = orig.in_channels, S = orig.out_channels, l = orig.kernel;
        const std::size_t r1 = tt->rank1(), r2 = tt->rank2();

        ThreeConvPlan plan;
        plan.rank1 = r1;
        plan.rank2 = r2;

        plan.pointwise_in.spec = ConvSpec{C, r1 * r2, 1, 1, 0, false, 1, false};
        plan.pointwise_in.weight = DenseTensor(plan.pointwise_in.spec.weight_dims());
        for (std::size_t a = 0; a < r1; ++a)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t b = 0; b < r2; ++b)
                    plan.pointwise_in.weight[group_major_channel(a, b, r1) * C + c] = tt->g2[(a * C + c) * r2 + b];

        plan.grouped.spec = ConvSpec{r1 * r2, r2, l, orig.stride, orig.padding, false, r2, true};
        plan.grouped.weight = DenseTensor(plan.grouped.spec.weight_dims());  // (1, R1, l, l)
        for (std::size_t a = 0; a < r1; ++a)
            for (std::size_t ij = 0; ij < l * l; ++ij) plan.grouped.weight[a * l * l + ij] = tt->g1[ij * r1 + a];

        plan.pointwise_out.spec = ConvSpec{r2, S, 1, 1, 0, tt->bias.has_value(), 1, false};
        plan.pointwise_out.weight = DenseTensor(plan.pointwise_out.spec.weight_dims());
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t b = 0; b < r2; ++b) plan.pointwise_out.weight[s * r2 + b] = tt->g3[b * S + s];
        plan.pointwise_out.bias = tt->bias;
        return plan;
    }

    const auto& lr = std::get<LowRankFactors>(factors);
    lr.validate();
    const ConvSpec& orig = lr.spec;
    const std::size_t C = orig.in_channels, S = orig.out_channels, r = lr.rank();
    TwoConvPlan plan;
    plan.rank = r;
    plan.reduce.spec = ConvSpec{C, r, 1, orig.stride, orig.padding, false, 1, false};
    plan.reduce.weight = DenseTensor(plan.reduce.spec.weight_dims());
    for (std::size_t k = 0; k < r; ++k)
        for (std::size_t c = 0; c < C; ++c) plan.reduce.weight[k * C + c] = lr.g1[c * r + k];
    plan.expand.spec = ConvSpec{r, S, 1, 1, 0, lr.bias.has_value(), 1, false};
    plan.expand.weight = DenseTensor(plan.expand.spec.weight_dims());
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t k = 0; k < r; ++k) plan.expand.weight[s * r + k] = lr.g2[k * S + s];
    plan.expand.bias = lr.bias;
    return plan;
}

std::vector<const PlanStage*> plan_stages(const ConvPlan& plan) {
    if (const auto* three = std::get_if<ThreeConvPlan>(&plan)) {
        return {&three->pointwise_in, &three->grouped, &three->pointwise_out};
    }
    const auto& two = std::get<TwoConvPlan>(plan);
    return {&two.reduce, &two.expand};
}

std::size_t plan_param_count(const ConvPlan& plan) {
    std::size_t total = 0;
    for (const PlanStage* stage : plan_stages(plan)) {
        total += stage->weight.size();
        if (stage->bias) total += stage->bias->size();
    }
    return total;
}

DenseTensor reference_conv2d(const DenseTensor& input, const DenseTensor& weight, const ConvSpec& spec,
                             const std::optional<std::vector<double>>& bias, std::uint64_t* mac_counter) {
    spec.validate();
    if (input.ndim() != 4 || input.dim(1) != spec.in_channels) {
        throw std::invalid_argument("reference_conv2d: input dims " + shape_to_string(input.dims()) +
                                    " do not match " + to_string(spec));
    }
    expect_dims(weight, spec.weight_dims(), "reference_conv2d weight");
    check_bias(bias, spec.out_channels);

    const std::size_t N = input.dim(0), C = spec.in_channels, S = spec.out_channels;
    const std::size_t H = input.dim(2), W = input.dim(3), l = spec.kernel;
    const std::size_t Ho = spec.out_extent(H), Wo = spec.out_extent(W);
    const std::size_t cg = C / spec.groups, sg = S / spec.groups;
    const auto pad = static_cast<long long>(spec.padding);

    DenseTensor out({N, S, Ho, Wo});
    std::uint64_t macs = 0;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t s = 0; s < S; ++s) {
            const std::size_t g = s / sg;
            const std::size_t ws = spec.shared_group_kernel ? s % sg : s;
            for (std::size_t ho = 0; ho < Ho; ++ho)
                for (std::size_t wo = 0; wo < Wo; ++wo) {
                    double acc = bias ? (*bias)[s] : 0.0;
                    for (std::size_t ci = 0; ci < cg; ++ci) {
                        const std::size_t c = g * cg + ci;
                        for (std::size_t i = 0; i < l; ++i) {
                            const long long h = static_cast<long long>(ho * spec.stride + i) - pad;
                            for (std::size_t j = 0; j < l; ++j) {
                                const long long w = static_cast<long long>(wo * spec.stride + j) - pad;
                                ++macs;
                                if (h < 0 || w < 0 || h >= static_cast<long long>(H) ||
                                    w >= static_cast<long long>(W))
                                    continue;
                                acc += weight[((ws * cg + ci) * l + i) * l + j] *
                                       input[((n * C + c) * H + static_cast<std::size_t>(h)) * W +
                                             static_cast<std::size_t>(w)];
                            }
                        }
                    }
                    out[((n * S + s) * Ho + ho) * Wo + wo] = acc;
                }
        }
    if (mac_counter) *mac_counter += macs;
    return out;
}

DenseTensor execute_plan(const ConvPlan& plan, const DenseTensor& input, std::uint64_t* mac_counter) {
    DenseTensor x = input;
    for (const PlanStage* stage : plan_stages(plan)) x = reference_conv2d(x, stage->weight, stage->spec, stage->bias, mac_counter);
    return x;
}

}  // namespace ttyard
