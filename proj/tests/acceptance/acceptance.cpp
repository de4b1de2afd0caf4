// Acceptance checks: one PASS/FAIL line per criterion, tolerances fixed below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oracles.hpp"
#include "ttyard/cost_model.hpp"
#include "ttyard/data_io.hpp"
#include "ttyard/random.hpp"
#include "ttyard/tt_format.hpp"
#include "ttyard/ttconv.hpp"
#include "ttyard/verify.hpp"
#include "ttyard/yard.hpp"

using namespace ttyard;
namespace fs = std::filesystem;

namespace {

constexpr double kMacsBand = 0.05;
constexpr double kParamsBand = 0.03;
constexpr double kLoweringTol = 1e-10;
constexpr double kRoundTripTol = 1e-12;
constexpr double kGradTol = 1e-4;
constexpr double kAccuracyDropPp = 2.0;

struct Outcome {
    bool passed;
    std::string detail;
};

std::string fmt(double v, int prec = 4) {
    std::ostringstream s;
    s.precision(prec);
    s << v;
    return s.str();
}

// 1 -------------------------------------------------------------------------
Outcome cost_baselines() {
    struct Row {
        const char* arch;
        double gmacs;
        double mparams;
    };
    bool ok = true;
    std::ostringstream d;
    for (const Row& r : {Row{"resnet18", 1.8, 11.0}, Row{"resnet34", 3.6, 21.8}, Row{"resnet50", 4.08, 25.5},
                         Row{"resnet101", 7.8, 44.5}}) {
        const ModelReport rep = model_report(arch_preset(r.arch, 224));
        const double g = static_cast<double>(rep.total_macs) / 1e9;
        const double p = static_cast<double>(rep.total_params) / 1e6;
        const double dg = g / r.gmacs - 1.0, dp = p / r.mparams - 1.0;
        const bool row_ok = std::abs(dg) <= kMacsBand && std::abs(dp) <= kParamsBand;
        ok = ok && row_ok;
        d << ' ' << r.arch << ' ' << fmt(g) << " GMACs (" << fmt(100 * dg, 2) << "%), " << fmt(p) << " M params ("
          << fmt(100 * dp, 2) << "%)" << (row_ok ? "" : " <-- out of band") << ';';
    }
    d << " bands +/-" << 100 * kMacsBand << "% MACs, +/-" << 100 * kParamsBand << "% params";
    return {ok, d.str()};
}

// 2 -------------------------------------------------------------------------
Outcome lowering_equivalence() {
    Rng rng(2024);
    double worst = 0;
    std::size_t configs = 0;
    for (int t = 0; t < 30; ++t) {
        const std::size_t C = rng.below(2) ? 256 : 128, S = rng.below(2) ? 256 : 128;
        const std::size_t l = rng.below(2) ? 3 : 1, stride = 1 + rng.below(2);
        const ConvSpec spec{C, S, l, stride, l / 2, true};
        const DenseTensor w = random_normal<double>(spec.weight_dims(), rng, 0.05);
        const auto b = random_normal<double>({S}, rng);
        const std::vector<double> bias(b.values());
        const KernelFactors f = factorize_kernel(w, spec, *select_ranks(spec), bias);
        const DenseTensor x = random_normal<double>({1, C, 7, 7}, rng);
        const DenseTensor dense = oracle::conv(x, reconstruct_kernel(f), S, stride, l / 2, 1, false, &bias);
        const DenseTensor plan = execute_plan(lower(f), x);
        if (plan.dims() != dense.dims()) return {false, "shape mismatch at " + to_string(spec)};
        worst = std::max(worst, max_abs_diff(plan, dense));
        ++configs;
    }
    return {worst <= kLoweringTol,
            std::to_string(configs) + " configs, max abs diff " + fmt(worst, 3) + " (tol " + fmt(kLoweringTol) + ")"};
}

// 3 -------------------------------------------------------------------------
Outcome tt_svd_exactness() {
    Rng rng(3);
    double worst = 0;
    std::size_t tensors = 0;
    std::vector<Shape> shapes{{8, 8, 8, 8}, {8, 8}, {2, 3, 4, 5}, {7, 2, 8}, {5, 5, 5, 5}};
    for (int k = 0; k < 10; ++k) {
        Shape s(2 + rng.below(3));
        for (auto& n : s) n = 2 + rng.below(7);
        shapes.push_back(s);
    }
    for (const Shape& s : shapes) {
        const DenseTensor a = random_normal<double>(s, rng);
        // rank bounds above every unfolding rank keep the decomposition exact
        const std::vector<std::size_t> full(s.size() - 1, std::size_t{1} << 20);
        worst = std::max(worst, relative_error(tt_reconstruct(tt_svd(a, {full, std::nullopt})), a));
        ++tensors;
    }
    bool unit = true;
    for (const Shape& s : {Shape{8, 8, 8, 8}, Shape{3, 6, 2}, Shape{5, 4}}) {
        std::vector<DenseTensor> factors;
        for (std::size_t n : s) factors.push_back(random_normal<double>({n}, rng));
        DenseTensor t(s);
        std::vector<std::size_t> idx(s.size(), 0);
        for (std::size_t flat = 0; flat < t.size(); ++flat) {
            double v = 1;
            for (std::size_t k = 0; k < s.size(); ++k) v *= factors[k][idx[k]];
            t[flat] = v;
            for (std::size_t k = s.size(); k-- > 0;) {
                if (++idx[k] < s[k]) break;
                idx[k] = 0;
            }
        }
        const auto ranks = tt_svd(t, {std::nullopt, 1e-12}).ranks();
        unit = unit && std::all_of(ranks.begin(), ranks.end(), [](std::size_t r) { return r == 1; });
    }
    return {worst <= kRoundTripTol && unit, std::to_string(tensors) + " tensors, worst rel. error " + fmt(worst, 3) +
                                                " (tol " + fmt(kRoundTripTol) + "); rank-1 inputs give unit ranks: " +
                                                (unit ? "yes" : "no")};
}

// 4 -------------------------------------------------------------------------
Outcome cost_identities() {
    struct Case {
        ConvSpec spec;
        RankChoice ranks;
        std::size_t h;
    };
    const std::vector<Case> cases{
        {{4, 6, 3, 1, 1}, RankChoice::spatial(2, 3), 5},  {{4, 6, 3, 2, 1}, RankChoice::spatial(2, 3), 7},
        {{6, 4, 3, 2, 0}, RankChoice::spatial(3, 2), 9},  {{5, 5, 5, 1, 2}, RankChoice::spatial(1, 4), 6},
        {{8, 8, 3, 1, 1}, RankChoice::spatial(4, 4), 4},  {{3, 7, 3, 1, 0}, RankChoice::spatial(2, 2), 5},
        {{6, 6, 3, 3, 1}, RankChoice::spatial(2, 2), 8},  {{4, 4, 3, 1, 1}, RankChoice::spatial(1, 1), 3},
        {{8, 4, 1, 2, 0}, RankChoice::pointwise(2), 5},   {{8, 4, 1, 1, 0}, RankChoice::pointwise(3), 4},
    };
    std::size_t mismatches = 0;
    for (const Case& c : cases) {
        const ConvSpec& s = c.spec;
        const LayerCost cost = cost_ttconv(s, c.ranks, c.h, c.h);
        KernelFactors f;
        std::uint64_t closed = 0;
        if (c.ranks.kind == RankKind::spatial) {
            const std::size_t r1 = c.ranks.r1, r2 = c.ranks.r2, l = s.kernel;
            closed = s.in_channels * r1 * r2 + r1 * l * l + r2 * s.out_channels;
            f = TTConvFactors{DenseTensor({l, l, r1}), DenseTensor({r1, s.in_channels, r2}),
                              DenseTensor({r2, s.out_channels}), s, std::nullopt};
        } else {
            closed = s.in_channels * c.ranks.r + c.ranks.r * s.out_channels;
            f = LowRankFactors{DenseTensor({s.in_channels, c.ranks.r}), DenseTensor({c.ranks.r, s.out_channels}), s,
                               std::nullopt};
        }
        std::uint64_t counted = 0;
        execute_plan(lower(f), DenseTensor({1, s.in_channels, c.h, c.h}), &counted);
        mismatches += (cost.params != closed) + (cost.macs != counted);
    }
    return {mismatches == 0, std::to_string(cases.size()) + " configs, " + std::to_string(mismatches) +
                                 " mismatches against closed-form params and instrumented MAC count (exact)"};
}

// 5 -------------------------------------------------------------------------
Outcome gradient_suite() {
    double worst = 0;
    std::string worst_kind;
    std::size_t kinds = 0;
    for (const auto& c : verify::gradient_suite(1)) {
        ++kinds;
        if (c.report.worst() >= worst) {
            worst = c.report.worst();
            worst_kind = c.kind;
        }
    }
    return {worst <= kGradTol, std::to_string(kinds) + " layer kinds, worst rel. error " + fmt(worst, 3) + " (" +
                                   worst_kind + "), tol " + fmt(kGradTol)};
}

// 6 -------------------------------------------------------------------------
struct YardSetting {
    std::uint64_t seed = 1;
    std::size_t train = 512, test = 256;
};

yard::YardConfig yard_config(std::size_t M, std::uint64_t seed) {
    yard::YardConfig c;
    c.M = M;
    c.K = 4;
    c.fine_tune_epochs = 10;
    c.train.seed = seed;
    return c;
}

Outcome desk_yard() {
    const YardSetting s;
    const Dataset train = gen_synthetic(s.train, s.seed);
    const Dataset test = gen_synthetic(s.test, s.seed ^ 0x7e57ULL);
    const yard::YardConfig cfg = yard_config(1, s.seed);

    nn::TrainConfig base = cfg.train;
    base.epochs = cfg.M * cfg.K + cfg.fine_tune_epochs;
    Rng base_rng(s.seed);
    auto baseline = nn::build_toy_resnet<float>(base_rng, 16);
    const double baseline_acc = nn::fit(baseline, train, test, base).rows().back().eval_acc;

    const auto run = [&] {
        Rng rng(s.seed);
        auto model = nn::build_toy_resnet<float>(rng, 16);
        return yard::run_yard(model, train, test, cfg).report;
    };
    const yard::YardReport r = run();
    const yard::YardReport again = run();

    std::size_t eligible = r.layers.size();
    bool a = r.replacements() <= cfg.K;
    for (const auto& it : r.iterations)
        if (it.replaced) a = a && it.alpha < 0.5;
    const bool b = r.replacements() == 0 || r.final_cost.total_params < r.baseline_cost.total_params;
    const bool c = 100.0 * r.final_test_accuracy >= 100.0 * baseline_acc - kAccuracyDropPp;
    const bool d = again.replacement_sequence() == r.replacement_sequence();

    std::ostringstream seq;
    for (std::size_t id : r.replacement_sequence()) seq << (seq.tellp() ? "," : "") << id;
    std::ostringstream det;
    det << eligible << " eligible layers; (a) " << r.replacements() << " replacements [" << seq.str()
        << "] all alpha<0.5: " << (a ? "yes" : "no") << "; (b) params " << r.baseline_cost.total_params << " -> "
        << r.final_cost.total_params << "; (c) accuracy " << fmt(100 * r.final_test_accuracy) << "% vs baseline "
        << fmt(100 * baseline_acc) << "% (allowed drop " << kAccuracyDropPp << " pp); (d) rerun identical: "
        << (d ? "yes" : "no");
    return {eligible >= 6 && a && b && c && d, det.str()};
}

// 7 -------------------------------------------------------------------------
std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::vector<std::string>> rows;
    for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
        rows.push_back(cells);
    }
    return rows;
}

Outcome ablation(const std::string& cli) {
    const fs::path out = fs::temp_directory_path() / "ttyard_acceptance_ablate";
    fs::remove_all(out);
    const std::string cmd = cli + " ablate --M-list 1,2,4 --seed 1 --out " + out.string() + " > " +
                            (fs::temp_directory_path() / "ttyard_acceptance_ablate.log").string() + " 2>&1";
    if (std::system(cmd.c_str()) != 0) return {false, "ablate exited nonzero: " + cmd};
    const auto rows = read_csv(out / "ablation.csv");
    const std::vector<std::string> header{"M", "replacements", "baseline_params", "final_params",
                                          "baseline_macs", "final_macs", "final_accuracy"};
    if (rows.empty() || rows.front() != header) return {false, "ablation.csv header mismatch"};
    if (rows.size() != 4) return {false, "expected 3 rows, got " + std::to_string(rows.size() - 1)};
    bool ok = true;
    std::ostringstream d;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        const std::size_t reps = std::stoul(row[1]);
        const auto base = std::stoull(row[2]), fin = std::stoull(row[3]);
        bool row_ok = reps <= 4 && (reps == 0 || fin < base);
        for (const auto& it : read_csv(out / ("M" + row[0]) / "yard_report.csv")) {
            if (it[0] == "iteration") continue;
            if (it[3] == "1" || it[3] == "true") row_ok = row_ok && std::stod(it[2]) < 0.5;
        }
        ok = ok && row_ok;
        d << " M=" << row[0] << ": " << reps << " replacements, params " << base << " -> " << fin << ", acc "
          << row[6] << (row_ok ? "" : " <-- violates 6(a-b)") << ';';
    }
    return {ok, d.str()};
}

// 8 -------------------------------------------------------------------------
Outcome container_format() {
    Rng rng(8);
    std::size_t identical = 0;
    for (int t = 0; t < 200; ++t) {
        WeightContainer c;
        const std::size_t n = 1 + rng.below(4);
        for (std::size_t e = 0; e < n; ++e) {
            ContainerEntry entry{"e" + std::to_string(e), rng.below(2) ? DType::f64 : DType::f32, {}, {}};
            std::uint64_t count = 1;
            for (std::size_t k = rng.below(7); k > 0; --k) {
                entry.dims.push_back(1 + rng.below(4));
                count *= entry.dims.back();
            }
            entry.data.resize(count * dtype_size(entry.dtype));
            for (auto& b : entry.data) b = static_cast<std::byte>(rng.below(256));
            c.add(std::move(entry));
        }
        const auto bytes = encode_container(c);
        const auto back = decode_container(bytes);
        identical += back == c && encode_container(back) == bytes;
    }

    WeightContainer one;
    one.add_tensor("w", TensorF({2, 2}, 1.0f));
    const auto good = encode_container(one);
    auto bad_magic = good;
    bad_magic[1] = std::byte{'Z'};
    std::vector<std::byte> truncated(good.begin(), good.end() - 5);
    WeightContainer two;
    two.add_tensor("a", TensorF({1}, 1.0f));
    two.add_tensor("b", TensorF({1}, 2.0f));
    auto duplicate = encode_container(two);
    // second entry's name byte sits after header, first entry and its length prefix
    const std::size_t second_name = 12 + (4 + 1 + 1 + 4 + 8 + 4) + 4;
    duplicate[second_name] = std::byte{'a'};

    std::set<FormatError::Kind> kinds;
    std::set<std::string> messages;
    std::size_t rejected = 0;
    for (const auto* corpus : {&bad_magic, &truncated, &duplicate}) {
        try {
            decode_container(*corpus);
        } catch (const FormatError& e) {
            ++rejected;
            kinds.insert(e.kind());
            messages.insert(e.what());
        }
    }
    const bool ok = identical == 200 && rejected == 3 && kinds.size() == 3 && messages.size() == 3;
    return {ok, std::to_string(identical) + "/200 round-trips bitwise identical; malformed corpus " +
                    std::to_string(rejected) + "/3 rejected with " + std::to_string(kinds.size()) +
                    " distinct diagnostics"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::vector<int> only;
    std::string cli = TTYARD_CLI;
    app.add_option("--criterion", only, "run only these criteria (1-8)")->check(CLI::Range(1, 8));
    app.add_option("--cli", cli, "path of the ttyard executable");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"cost-model baselines", cost_baselines},
        {"lowering equivalence", lowering_equivalence},
        {"TT-SVD exactness", tt_svd_exactness},
        {"closed-form cost identities", cost_identities},
        {"gradient suite", gradient_suite},
        {"desk-scale Tensor Yard", desk_yard},
        {"ablation harness", [&] { return ablation(cli); }},
        {"container format", container_format},
    };

    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (o.passed ? "PASS" : "FAIL") << "  criterion " << id << " (" << criteria[i].first << "): "
                  << o.detail << " [" << fmt(secs, 3) << " s]" << std::endl;
        all = all && o.passed;
    }
    return all ? 0 : 1;
}
