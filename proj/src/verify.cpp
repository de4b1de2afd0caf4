#include "ttyard/verify.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "ttyard/cost_model.hpp"
#include "ttyard/data_io.hpp"
#include "ttyard/linalg.hpp"
#include "ttyard/nn/module.hpp"
#include "ttyard/tt_format.hpp"
#include "ttyard/ttconv.hpp"

namespace ttyard::verify {
namespace {

using nn::Parameter;
using nn::Tape;
using nn::Var;
using D = double;
using Params = std::vector<std::pair<std::string, Parameter<D>*>>;

Parameter<D> random_param(Shape dims, Rng& rng, double sd = 1.0) { return Parameter<D>(random_normal<D>(dims, rng, sd)); }

nn::GradCheckReport check(const std::function<Var(Tape<D>&)>& f, const Params& params,
                          const nn::GradCheckOptions& opts) {
    return nn::grad_check<D>(f, params, opts);
}

// Random projection so that every output element reaches the loss with a distinct weight.
std::function<Var(Tape<D>&, Var)> probe(Rng& rng) {
    auto weights = std::make_shared<Tensor<D>>();
    auto seed = rng.next();
    return [weights, seed](Tape<D>& t, Var y) {
        if (weights->dims() != t.value(y).dims()) {
            Rng r(seed);
            *weights = random_normal<D>(t.value(y).dims(), r);
        }
        return nn::weighted_sum(t, y, *weights);
    };
}

TTConvFactors random_tt_factors(const ConvSpec& spec, std::size_t r1, std::size_t r2, Rng& rng) {
    const std::size_t l = spec.kernel;
    TTConvFactors f{random_normal<D>({l, l, r1}, rng), random_normal<D>({r1, spec.in_channels, r2}, rng),
                    random_normal<D>({r2, spec.out_channels}, rng), spec, std::nullopt};
    if (spec.has_bias) {
        const auto b = random_normal<D>({spec.out_channels}, rng);
        f.bias = std::vector<double>(b.values().begin(), b.values().end());
    }
    return f;
}

}  // namespace

std::vector<GradientCase> gradient_suite(std::uint64_t seed, const nn::GradCheckOptions& opts) {
    Rng rng(seed);
    std::vector<GradientCase> out;

    {  // dense conv with stride, padding, bias
        const ConvSpec spec{3, 4, 3, 2, 1, true};
        auto x = random_param({2, 3, 5, 5}, rng);
        auto w = random_param(spec.weight_dims(), rng);
        auto b = random_param({4}, rng);
        auto loss = probe(rng);
        out.push_back({"conv2d", check([&](Tape<D>& t) { return loss(t, nn::conv2d(t, nn::leaf(t, x), w, &b, spec)); },
                                       {{"input", &x}, {"weight", &w}, {"bias", &b}}, opts)});
    }
    {  // grouped conv with one kernel shared by all groups
        const ConvSpec spec{8, 4, 3, 1, 1, false, 4, true};
        auto x = random_param({2, 8, 4, 4}, rng);
        auto w = random_param(spec.weight_dims(), rng);
        auto loss = probe(rng);
        out.push_back({"conv2d_shared_group",
                       check([&](Tape<D>& t) { return loss(t, nn::conv2d(t, nn::leaf(t, x), w, static_cast<Parameter<D>*>(nullptr), spec)); },
                             {{"input", &x}, {"weight", &w}}, opts)});
    }
    {  // batch norm, training statistics
        auto x = random_param({4, 3, 3, 3}, rng);
        auto gamma = random_param({3}, rng);
        auto beta = random_param({3}, rng);
        Tensor<D> rm({3}), rv({3}, 1.0);
        auto loss = probe(rng);
        out.push_back({"batchnorm", check(
                                        [&](Tape<D>& t) {
                                            return loss(t, nn::batch_norm(t, nn::leaf(t, x), gamma, beta, rm, rv, 0.1,
                                                                          1e-5));
                                        },
                                        {{"input", &x}, {"gamma", &gamma}, {"beta", &beta}}, opts)});
    }
    {
        auto x = random_param({2, 3, 4, 4}, rng);
        auto loss = probe(rng);
        out.push_back({"relu", check([&](Tape<D>& t) { return loss(t, nn::relu(t, nn::leaf(t, x))); },
                                     {{"input", &x}}, opts)});
    }
    {
        auto a = random_param({2, 3, 4, 4}, rng);
        auto b = random_param({2, 3, 4, 4}, rng);
        auto loss = probe(rng);
        out.push_back({"residual_add",
                       check([&](Tape<D>& t) { return loss(t, nn::add(t, nn::leaf(t, a), nn::leaf(t, b))); },
                             {{"a", &a}, {"b", &b}}, opts)});
    }
    {
        auto x = random_param({2, 3, 6, 6}, rng);
        auto loss = probe(rng);
        out.push_back({"max_pool", check([&](Tape<D>& t) { return loss(t, nn::max_pool2d(t, nn::leaf(t, x), 3, 2, 1)); },
                                         {{"input", &x}}, opts)});
    }
    {
        auto x = random_param({2, 3, 4, 4}, rng);
        auto loss = probe(rng);
        out.push_back({"global_avg_pool", check([&](Tape<D>& t) { return loss(t, nn::global_avg_pool(t, nn::leaf(t, x))); },
                                                {{"input", &x}}, opts)});
    }
    {
        auto x = random_param({3, 5}, rng);
        auto w = random_param({4, 5}, rng);
        auto b = random_param({4}, rng);
        auto loss = probe(rng);
        out.push_back({"linear", check([&](Tape<D>& t) { return loss(t, nn::linear(t, nn::leaf(t, x), w, &b)); },
                                       {{"input", &x}, {"weight", &w}, {"bias", &b}}, opts)});
    }
    {
        auto logits = random_param({5, 4}, rng);
        const std::vector<int> labels{0, 3, 1, 2, 3};
        out.push_back({"softmax_cross_entropy",
                       check([&](Tape<D>& t) { return nn::softmax_cross_entropy(t, nn::leaf(t, logits), labels); },
                             {{"logits", &logits}}, opts)});
    }
    {  // mixed op: alpha and both branch inputs
        auto a = random_param({2, 3, 3, 3}, rng);
        auto b = random_param({2, 3, 3, 3}, rng);
        Parameter<D> alpha(Tensor<D>({1}, 0.3));
        auto loss = probe(rng);
        out.push_back({"mixed_op", check([&](Tape<D>& t) { return loss(t, nn::mix(t, nn::leaf(t, a), nn::leaf(t, b), alpha)); },
                                         {{"alpha", &alpha}, {"conv_branch", &a}, {"tt_branch", &b}}, opts)});
    }
    {  // executable TTConv (three stages, shared middle kernel)
        const ConvSpec spec{6, 5, 3, 2, 1, true};
        nn::TTConv<D> tt(lower(random_tt_factors(spec, 2, 3, rng)), spec);
        auto x = random_param({2, 6, 5, 5}, rng);
        auto loss = probe(rng);
        Params params = nn::named_parameters<D>(tt);
        params.emplace_back("input", &x);
        out.push_back({"ttconv", check([&](Tape<D>& t) { return loss(t, tt.forward(t, nn::leaf(t, x))); }, params, opts)});
    }
    {  // residual block with projection shortcut, 10 random parameter entries overall
        nn::Sequential<D> main;
        main.append("conv1", std::make_unique<nn::Conv2d<D>>(ConvSpec{3, 4, 3, 2, 1}, rng));
        main.append("bn1", std::make_unique<nn::BatchNorm2d<D>>(4));
        main.append("relu1", std::make_unique<nn::ReLU<D>>());
        main.append("conv2", std::make_unique<nn::Conv2d<D>>(ConvSpec{4, 4, 3, 1, 1}, rng));
        main.append("bn2", std::make_unique<nn::BatchNorm2d<D>>(4));
        auto shortcut = std::make_unique<nn::Sequential<D>>();
        shortcut->append("conv", std::make_unique<nn::Conv2d<D>>(ConvSpec{3, 4, 1, 2, 0}, rng));
        shortcut->append("bn", std::make_unique<nn::BatchNorm2d<D>>(4));
        nn::Residual<D> block(std::move(main), std::move(shortcut));
        auto x = random_param({3, 3, 5, 5}, rng);
        auto loss = probe(rng);
        nn::GradCheckOptions block_opts = opts;
        block_opts.probes_per_parameter = 2;
        out.push_back({"residual_block",
                       check([&](Tape<D>& t) { return loss(t, block.forward(t, nn::leaf(t, x))); },
                             nn::named_parameters<D>(block), block_opts)});
    }
    return out;
}

namespace {

CheckResult at_most(std::string name, double measured, double tol, std::string detail = {}) {
    return {std::move(name), measured <= tol, measured, tol, std::move(detail)};
}

CheckResult exact(std::string name, bool ok, std::string detail = {}) {
    return {std::move(name), ok, ok ? 0.0 : 1.0, 0.0, std::move(detail)};
}

double orthonormality_defect(const DenseTensor& q) {
    const DenseTensor g = matmul(transpose(q), q);
    double worst = 0;
    for (std::size_t i = 0; i < g.dim(0); ++i)
        for (std::size_t j = 0; j < g.dim(1); ++j) worst = std::max(worst, std::abs(g.at({i, j}) - (i == j ? 1.0 : 0.0)));
    return worst;
}

DenseTensor usv(const SvdResult& d) {
    DenseTensor us = d.u;
    const std::size_t k = d.singular_values.size();
    for (std::size_t i = 0; i < us.dim(0); ++i)
        for (std::size_t j = 0; j < k; ++j) us[i * k + j] *= d.singular_values[j];
    return matmul(us, transpose(d.v));
}

}  // namespace

std::vector<CheckResult> run_all(const VerifyOptions& opts) {
    std::vector<CheckResult> out;
    Rng rng(opts.seed);

    {
        const DenseTensor m = random_normal<D>({8, 5}, rng);
        const SvdResult d = svd(m);
        out.push_back(at_most("svd.reconstruction", relative_error(usv(d), m), 1e-12));
        out.push_back(at_most("svd.orthonormality", std::max(orthonormality_defect(d.u), orthonormality_defect(d.v)),
                              1e-10));
    }
    {
        double worst = 0;
        for (const Shape& dims : {Shape{4, 4, 4}, Shape{3, 5, 2, 4}, Shape{8, 8, 8, 8}}) {
            const DenseTensor t = random_normal<D>(dims, rng);
            std::vector<std::size_t> full(dims.size() - 1, 4096);
            worst = std::max(worst, relative_error(tt_reconstruct(tt_svd(t, {full, std::nullopt})), t));
        }
        out.push_back(at_most("tt_svd.full_rank_roundtrip", worst, 1e-12));
    }
    {
        const DenseTensor a = random_normal<D>({3}, rng), b = random_normal<D>({4}, rng), c = random_normal<D>({5}, rng);
        DenseTensor t({3, 4, 5});
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 4; ++j)
                for (std::size_t k = 0; k < 5; ++k) t[(i * 4 + j) * 5 + k] = a[i] * b[j] * c[k];
        const TTFormat tt = tt_svd(t, {std::nullopt, 1e-12});
        const bool unit = tt.ranks() == std::vector<std::size_t>{1, 1, 1, 1};
        out.push_back(exact("tt_svd.rank1_unit_ranks", unit && relative_error(tt_reconstruct(tt), t) <= 1e-12));
    }
    {
        const TTFormat tt = tt_svd(random_normal<D>({4, 5, 6}, rng), {std::vector<std::size_t>{3, 3}, std::nullopt});
        std::vector<DenseTensor> cores = tt.cores();
        if (opts.corrupt_core_shape) cores[1] = DenseTensor({cores[1].dim(0) + 1, cores[1].dim(1), cores[1].dim(2)});
        const std::string violation = tt_violation(cores);
        out.push_back(violation.empty() ? exact("tt_format.invariants", true)
                                        : exact("tt_format.invariants", false, violation));

        const DenseTensor full = tt_reconstruct(tt);
        double worst = 0;
        for (int probe = 0; probe < 20; ++probe) {
            const std::vector<std::size_t> idx{rng.below(4), rng.below(5), rng.below(6)};
            worst = std::max(worst, std::abs(tt_element(tt, idx) - full.at(std::span<const std::size_t>(idx))));
        }
        out.push_back(at_most("tt_element.agreement", worst, 1e-13));
    }
    {
        bool ok = true;
        for (std::size_t d = 2; d <= 5; ++d) {
            const std::size_t n = 4, r = 2;
            std::vector<DenseTensor> cores;
            for (std::size_t k = 0; k < d; ++k) cores.emplace_back(Shape{k == 0 ? 1 : r, n, k + 1 == d ? 1 : r});
            ok = ok && tt_param_count(TTFormat(cores)) == (d - 2) * n * r * r + 2 * n * r;
        }
        out.push_back(exact("tt_param_count.closed_form", ok));
    }
    {
        const DenseTensor m = random_normal<D>({4, 6}, rng);
        const DenseTensor p = pair_indices(m, {2, 2}, {2, 3});
        double sum_m = 0, sum_p = 0;
        for (double v : m.values()) sum_m += v;
        for (double v : p.values()) sum_p += v;
        out.push_back(exact("pair_indices.bijection",
                            unpair_indices(p, {2, 2}, {2, 3}) == m && std::abs(sum_m - sum_p) <= 1e-12));
    }
    {
        double worst = 0;
        for (const ConvSpec& spec : {ConvSpec{128, 128, 3, 1, 1, true}, ConvSpec{128, 256, 3, 2, 1},
                                     ConvSpec{256, 128, 1, 2, 0, true}}) {
            KernelFactors f;
            if (spec.kernel == 1) {
                LowRankFactors lr{random_normal<D>({spec.in_channels, 16}, rng),
                                  random_normal<D>({16, spec.out_channels}, rng), spec, std::nullopt};
                if (spec.has_bias) lr.bias = std::vector<double>(spec.out_channels, 0.25);
                f = lr;
            } else {
                f = random_tt_factors(spec, 2, 16, rng);
            }
            const DenseTensor x = random_normal<D>({1, spec.in_channels, 6, 6}, rng);
            const DenseTensor dense = reference_conv2d(x, reconstruct_kernel(f), spec,
                                                       std::visit([](const auto& v) { return v.bias; }, f));
            worst = std::max(worst, max_abs_diff(execute_plan(lower(f), x), dense));
        }
        out.push_back(at_most("ttconv.lowering_equivalence", worst, 1e-10));
    }
    {
        const ConvSpec spec{128, 128, 3, 1, 1};
        const RankChoice ranks = RankChoice::spatial(2, 16);
        const DenseTensor once = reconstruct_kernel(factorize_kernel(random_normal<D>(spec.weight_dims(), rng), spec, ranks));
        const DenseTensor twice = reconstruct_kernel(factorize_kernel(once, spec, ranks));
        out.push_back(at_most("ttconv.projection", relative_error(twice, once), 1e-12));
    }
    {
        bool ok = true;
        for (const ConvSpec& spec : {ConvSpec{4, 6, 3, 1, 1}, ConvSpec{5, 3, 3, 2, 1}, ConvSpec{6, 6, 1, 2, 0}}) {
            std::uint64_t macs = 0;
            reference_conv2d(random_normal<D>({1, spec.in_channels, 7, 7}, rng),
                             random_normal<D>(spec.weight_dims(), rng), spec, std::nullopt, &macs);
            ok = ok && macs == cost_dense(spec, 7, 7).macs;
        }
        out.push_back(exact("cost.dense_loop_count", ok));
    }
    {
        bool ok = true;
        for (const ConvSpec& spec : {ConvSpec{8, 8, 3, 1, 1}, ConvSpec{6, 10, 3, 2, 1}}) {
            const TTConvFactors f = random_tt_factors(spec, 2, 4, rng);
            const ConvPlan plan = lower(f);
            std::uint64_t macs = 0;
            execute_plan(plan, random_normal<D>({1, spec.in_channels, 9, 9}, rng), &macs);
            const LayerCost c = cost_ttconv(spec, RankChoice::spatial(2, 4), 9, 9);
            ok = ok && macs == c.macs && plan_param_count(plan) == c.params;
        }
        out.push_back(exact("cost.ttconv_loop_count", ok));
    }
    {
        double worst = 0;
        std::string worst_kind;
        for (const auto& g : gradient_suite(opts.seed)) {
            if (g.report.worst() >= worst) {
                worst = g.report.worst();
                worst_kind = g.kind;
            }
        }
        out.push_back(at_most("autodiff.finite_differences", worst, 1e-4, "worst layer kind: " + worst_kind));
    }
    {
        WeightContainer c;
        c.add_tensor("a", random_normal<float>({3, 2}, rng));
        c.add_tensor("b.weight", random_normal<D>({2, 2, 1, 3}, rng));
        out.push_back(exact("container.roundtrip", decode_container(encode_container(c)) == c));
    }
    {
        const Dataset a = gen_synthetic(16, opts.seed), b = gen_synthetic(16, opts.seed);
        out.push_back(exact("synthetic.determinism", a.images == b.images && a.labels == b.labels));
    }
    return out;
}

bool print_results(std::ostream& out, const std::vector<CheckResult>& results) {
    bool all = true;
    for (const auto& r : results) {
        all = all && r.passed;
        out << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(32) << r.name << std::right
            << " measured=" << std::scientific << std::setprecision(3) << r.measured << " tol=" << r.tolerance
            << std::defaultfloat;
        if (!r.detail.empty()) out << "  (" << r.detail << ')';
        out << '\n';
    }
    return all;
}

}  // namespace ttyard::verify
