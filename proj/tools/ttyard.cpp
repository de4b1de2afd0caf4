// ttyard: command-line front end for the toolkit.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ttyard/cost_model.hpp"
#include "ttyard/data_io.hpp"
#include "ttyard/nn/train.hpp"
#include "ttyard/ttconv.hpp"
#include "ttyard/verify.hpp"
#include "ttyard/yard.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ttyard;

namespace {

struct CommandError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::size_t thread_cap() {
    const char* env = std::getenv("TTYARD_THREADS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw CommandError(std::string("TTYARD_THREADS must be a positive integer, got '") + env + "'");
    return static_cast<std::size_t>(v);
}

// Printed before any other output; also stored in each run's manifest.
json repro_header(const std::string& command, std::uint64_t seed, const json& config) {
    return {{"toolkit", "ttyard"},
            {"version", TTYARD_VERSION},
            {"command", command},
            {"seed", seed},
            {"threads", 1},
            {"thread_cap", thread_cap()},
            {"config", config}};
}

void print_header(const json& h) {
    std::cout << "# ttyard " << h["version"].get<std::string>() << " | command: " << h["command"].get<std::string>()
              << " | seed: " << h["seed"].get<std::uint64_t>() << " | threads: 1 (cap "
              << h["thread_cap"].get<std::size_t>() << ")\n"
              << "# config: " << h["config"].dump() << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw CommandError("cannot write '" + path.string() + "'");
    out << text;
}

void prepare_out_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw CommandError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

// ---- data --------------------------------------------------------------------

struct DataOptions {
    std::string source = "synthetic";
    std::size_t train_size = 512;
    std::size_t test_size = 256;
};

TrainTestSplit load_data(const DataOptions& d, std::uint64_t seed) {
    if (d.source == "synthetic") {
        return {gen_synthetic(d.train_size, seed), gen_synthetic(d.test_size, seed ^ 0x7e57ULL)};
    }
    const std::string prefix = "cifar10:";
    if (d.source.rfind(prefix, 0) == 0) return load_cifar10(d.source.substr(prefix.size()));
    throw CommandError("unknown data source '" + d.source + "' (expected synthetic or cifar10:<dir>)");
}

nn::Model<float> toy_for(const Dataset& data, std::uint64_t seed) {
    Rng rng(seed);
    return nn::build_toy_resnet<float>(rng, data.images.dim(2), data.num_classes, data.images.dim(1));
}

WeightContainer checkpoint(nn::Model<float>& model) {
    WeightContainer c;
    for (const auto& [name, t] : model.state()) c.add_tensor(name, *t);
    return c;
}

// ---- decompose ----------------------------------------------------------------

struct DecomposeOptions {
    std::string in, out;
    std::vector<std::string> layers;
    std::size_t res = 32;
};

template <typename T>
void add_stages(WeightContainer& out, const std::string& layer, const ConvPlan& plan) {
    std::size_t k = 1;
    for (const PlanStage* stage : plan_stages(plan)) {
        const std::string base = layer + ".stage" + std::to_string(k++);
        out.add_tensor(base + ".weight", stage->weight.template cast<T>());
        if (stage->bias) out.add_tensor(base + ".bias", Tensor<double>({stage->bias->size()}, *stage->bias).template cast<T>());
    }
}

int run_decompose(const DecomposeOptions& o) {
    print_header(repro_header("decompose", 0, {{"in", o.in}, {"out", o.out}, {"layers", o.layers}, {"res", o.res}}));
    const WeightContainer in = read_container(o.in);
    if (in.empty()) throw CommandError("input container '" + o.in + "' is empty");

    struct Candidate {
        std::string layer;
        const ContainerEntry* weight;
    };
    std::vector<Candidate> convs;
    for (const auto& e : in.entries()) {
        const std::string suffix = ".weight";
        if (e.dims.size() == 4 && e.dims[2] == e.dims[3] && e.name.size() > suffix.size() &&
            e.name.compare(e.name.size() - suffix.size(), suffix.size(), suffix) == 0) {
            convs.push_back({e.name.substr(0, e.name.size() - suffix.size()), &e});
        }
    }
    for (const auto& requested : o.layers) {
        const auto it = std::find_if(convs.begin(), convs.end(), [&](const Candidate& c) { return c.layer == requested; });
        if (it == convs.end()) throw CommandError("layer '" + requested + "' has no 4-d '<layer>.weight' entry");
    }

    WeightContainer out;
    std::vector<std::string> consumed;
    std::ostringstream report;
    report << std::left << std::setw(28) << "layer" << std::setw(28) << "spec" << std::setw(14) << "ranks"
           << std::right << std::setw(12) << "rel_err" << std::setw(12) << "params" << std::setw(12) << "tt_params"
           << std::setw(14) << "macs" << std::setw(14) << "tt_macs" << '\n';
    std::size_t decomposed = 0;
    for (const auto& c : convs) {
        const bool requested = o.layers.empty() ||
                               std::find(o.layers.begin(), o.layers.end(), c.layer) != o.layers.end();
        if (!requested) continue;
        const auto& d = c.weight->dims;
        const std::size_t l = d[2];
        const ContainerEntry* bias_entry = in.find(c.layer + ".bias");
        ConvSpec spec{d[1], d[0], l, 1, l / 2, bias_entry != nullptr};
        const auto ranks = select_ranks(spec);
        if (!ranks) {
            if (!o.layers.empty()) {
                throw CommandError("refusing to decompose '" + c.layer + "': " + to_string(spec) +
                                   " has fewer than " + std::to_string(kMinDecomposableChannels) +
                                   " input or output channels (decomposition requires min(C, S) >= " +
                                   std::to_string(kMinDecomposableChannels) + ")");
            }
            continue;
        }
        const DenseTensor w = c.weight->to_tensor<double>();
        std::optional<std::vector<double>> bias;
        if (bias_entry) {
            const auto b = bias_entry->to_tensor<double>();
            bias = std::vector<double>(b.values().begin(), b.values().end());
        }
        const KernelFactors factors = factorize_kernel(w, spec, *ranks, bias);
        const RankChoice used = factor_ranks(factors);
        const ConvPlan plan = lower(factors);
        if (c.weight->dtype == DType::f32) {
            add_stages<float>(out, c.layer, plan);
        } else {
            add_stages<double>(out, c.layer, plan);
        }
        consumed.push_back(c.weight->name);
        if (bias_entry) consumed.push_back(bias_entry->name);
        const LayerCost dense = cost_dense(spec, o.res, o.res);
        const LayerCost tt = cost_ttconv(spec, used, o.res, o.res);
        report << std::left << std::setw(28) << c.layer << std::setw(28) << to_string(spec) << std::setw(14)
               << to_string(used) << std::right << std::setw(12) << std::scientific << std::setprecision(3)
               << relative_error(reconstruct_kernel(factors), w) << std::defaultfloat << std::setw(12) << dense.params
               << std::setw(12) << tt.params << std::setw(14) << dense.macs << std::setw(14) << tt.macs << '\n';
        ++decomposed;
    }
    if (decomposed == 0) {
        throw CommandError("no eligible convolution in '" + o.in + "' (decomposition requires min(C, S) >= " +
                           std::to_string(kMinDecomposableChannels) + ")");
    }
    for (const auto& e : in.entries()) {
        if (std::find(consumed.begin(), consumed.end(), e.name) == consumed.end()) out.add(e);
    }
    write_container(o.out, out);
    std::cout << report.str() << "# MACs at " << o.res << "x" << o.res << " input, stride 1, same padding\n"
              << "# decomposed " << decomposed << " layer(s); wrote " << out.size() << " entries to " << o.out << '\n';
    return 0;
}

// ---- cost -----------------------------------------------------------------------

struct CostOptions {
    std::string arch;
    std::size_t res = 224;
    bool decomposed = false;
    std::string csv;
};

int run_cost(const CostOptions& o) {
    print_header(repro_header("cost", 0, {{"arch", o.arch}, {"res", o.res}, {"decomposed", o.decomposed}}));
    std::vector<ArchLayer> arch;
    try {
        arch = arch_preset(o.arch, o.res);
    } catch (const std::invalid_argument& e) {
        throw CLI::ValidationError("--arch", e.what());
    }
    if (o.decomposed) arch = decompose_arch(arch);
    const ModelReport report = model_report(arch);
    write_report_text(std::cout, report, o.arch + " @ " + std::to_string(o.res) + "x" + std::to_string(o.res) +
                                             (o.decomposed ? " (decomposed)" : ""));
    if (!o.csv.empty()) {
        if (o.csv == "-") {
            write_report_csv(std::cout, report);
        } else {
            std::ofstream out(o.csv);
            if (!out) throw CommandError("cannot write '" + o.csv + "'");
            write_report_csv(out, report);
        }
    }
    return 0;
}

// ---- verify -----------------------------------------------------------------------

int run_verify(const verify::VerifyOptions& o) {
    print_header(repro_header("verify", o.seed, {{"corrupt_core_shape", o.corrupt_core_shape}}));
    const auto results = verify::run_all(o);
    const bool ok = verify::print_results(std::cout, results);
    std::size_t failed = 0;
    for (const auto& r : results) failed += !r.passed;
    std::cout << (ok ? "all " + std::to_string(results.size()) + " checks passed\n"
                     : std::to_string(failed) + " of " + std::to_string(results.size()) + " checks failed\n");
    return ok ? 0 : 1;
}

// ---- train ------------------------------------------------------------------------

struct TrainOptions {
    DataOptions data;
    nn::TrainConfig config;
    std::string schedule = "cosine";
    std::string out;
};

json train_config_json(const nn::TrainConfig& c) {
    return {{"batch_size", c.batch_size}, {"base_lr", c.initial_lr()},       {"momentum", c.momentum},
            {"weight_decay", c.weight_decay}, {"warmup_epochs", c.warmup_epochs}, {"schedule", nn::to_string(c.schedule)},
            {"epochs", c.epochs}};
}

int run_train(TrainOptions o) {
    o.config.schedule = nn::schedule_from_string(o.schedule);
    o.config.validate();
    json cfg = train_config_json(o.config);
    cfg["data"] = o.data.source;
    cfg["train_size"] = o.data.train_size;
    cfg["test_size"] = o.data.test_size;
    const json header = repro_header("train", o.config.seed, cfg);
    print_header(header);
    prepare_out_dir(o.out);

    auto data = load_data(o.data, o.config.seed);
    auto model = toy_for(data.train, o.config.seed);
    const auto log = nn::fit(model, data.train, data.test, o.config);
    std::ofstream csv(fs::path(o.out) / "train_log.csv");
    log.write_csv(csv);
    write_container(fs::path(o.out) / "model.tyt", checkpoint(model));
    write_text(fs::path(o.out) / "manifest.json", header.dump(2) + "\n");
    const auto& last = log.rows().back();
    std::cout << "final train_acc=" << last.train_acc << " eval_acc=" << last.eval_acc << " loss=" << last.loss
              << "\nwrote " << o.out << "/{train_log.csv,model.tyt,manifest.json}\n";
    return 0;
}

// ---- yard / ablate ------------------------------------------------------------------

struct YardOptions {
    DataOptions data;
    yard::YardConfig config;
    std::string tt_init = "decomposed";
    std::string out;
    std::vector<std::size_t> m_list;
};

json yard_config_json(const YardOptions& o) {
    json cfg = train_config_json(o.config.train);
    cfg.erase("epochs");
    cfg["M"] = o.config.M;
    cfg["K"] = o.config.K;
    cfg["epochs_finetune"] = o.config.fine_tune_epochs;
    cfg["tt_init"] = o.tt_init;
    cfg["data"] = o.data.source;
    cfg["train_size"] = o.data.train_size;
    cfg["test_size"] = o.data.test_size;
    return cfg;
}

yard::YardResult yard_once(const YardOptions& o, const TrainTestSplit& data, const fs::path& dir, const json& header) {
    prepare_out_dir(dir);
    auto model = toy_for(data.train, o.config.train.seed);
    auto result = yard::run_yard(model, data.train, data.test, o.config);
    {
        std::ofstream csv(dir / "yard_report.csv");
        result.report.write_csv(csv);
    }
    {
        std::ofstream csv(dir / "train_log.csv");
        result.log.write_csv(csv);
    }
    write_text(dir / "summary.json", result.report.summary_json() + "\n");
    {
        std::ofstream cost(dir / "cost.txt");
        write_report_text(cost, result.report.baseline_cost, "baseline");
        cost << '\n';
        write_report_text(cost, result.report.final_cost, "after tensor yard");
    }
    write_container(dir / "final.tyt", checkpoint(model));
    write_text(dir / "manifest.json", header.dump(2) + "\n");
    return result;
}

void print_yard(const yard::YardReport& r) {
    r.write_csv(std::cout);
    std::cout << "replacements=" << r.replacements() << " baseline_params=" << r.baseline_cost.total_params
              << " final_params=" << r.final_cost.total_params << " baseline_macs=" << r.baseline_cost.total_macs
              << " final_macs=" << r.final_cost.total_macs << " test_acc=" << r.final_test_accuracy << '\n';
}

yard::TTInit parse_init(const std::string& s) {
    if (s == "decomposed") return yard::TTInit::decomposed;
    if (s == "random") return yard::TTInit::random;
    throw CLI::ValidationError("--tt-init", "expected decomposed or random");
}

int run_yard(YardOptions o) {
    o.config.init = parse_init(o.tt_init);
    o.config.validate();
    const json header = repro_header("yard", o.config.train.seed, yard_config_json(o));
    print_header(header);
    const auto data = load_data(o.data, o.config.train.seed);
    const auto result = yard_once(o, data, o.out, header);
    print_yard(result.report);
    std::cout << "wrote " << o.out << "/{yard_report.csv,summary.json,cost.txt,train_log.csv,final.tyt,manifest.json}\n";
    return 0;
}

int run_ablate(YardOptions o) {
    std::vector<std::size_t> ms;
    for (std::size_t m : o.m_list)
        if (std::find(ms.begin(), ms.end(), m) == ms.end()) ms.push_back(m);
    if (ms.empty()) throw CLI::ValidationError("--M-list", "needs at least one value");
    o.config.init = parse_init(o.tt_init);
    json cfg = yard_config_json(o);
    cfg.erase("M");
    cfg["M_list"] = ms;
    const json header = repro_header("ablate", o.config.train.seed, cfg);
    print_header(header);
    prepare_out_dir(o.out);
    const auto data = load_data(o.data, o.config.train.seed);

    std::ostringstream table;
    table << "M,replacements,baseline_params,final_params,baseline_macs,final_macs,final_accuracy\n";
    for (std::size_t m : ms) {
        YardOptions run = o;
        run.config.M = m;
        run.config.validate();
        json h = header;
        h["config"]["M"] = m;
        const auto result = yard_once(run, data, fs::path(o.out) / ("M" + std::to_string(m)), h);
        const auto& r = result.report;
        std::cout << "== M=" << m << '\n';
        print_yard(r);
        table << m << ',' << r.replacements() << ',' << r.baseline_cost.total_params << ',' << r.final_cost.total_params
              << ',' << r.baseline_cost.total_macs << ',' << r.final_cost.total_macs << ',' << r.final_test_accuracy
              << '\n';
    }
    write_text(fs::path(o.out) / "ablation.csv", table.str());
    write_text(fs::path(o.out) / "manifest.json", header.dump(2) + "\n");
    std::cout << "== ablation\n" << table.str();
    return 0;
}

void add_data_flags(CLI::App* cmd, DataOptions& d) {
    cmd->add_option("--data", d.source, "synthetic or cifar10:<dir>")->capture_default_str();
    cmd->add_option("--train-size", d.train_size, "synthetic training samples")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--test-size", d.test_size, "synthetic test samples")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
}

void add_train_flags(CLI::App* cmd, nn::TrainConfig& c) {
    cmd->add_option("--batch", c.batch_size, "batch size")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option_function<double>("--lr", [&c](double v) { c.base_lr = v; }, "base lr (default 0.1*batch/256)")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--warmup", c.warmup_epochs, "warmup epochs")->check(CLI::NonNegativeNumber)->capture_default_str();
    cmd->add_option("--momentum", c.momentum)->capture_default_str();
    cmd->add_option("--weight-decay", c.weight_decay)->check(CLI::NonNegativeNumber)->capture_default_str();
    cmd->add_option("--seed", c.seed)->capture_default_str();
}

void add_yard_flags(CLI::App* cmd, YardOptions& o, bool with_m) {
    add_data_flags(cmd, o.data);
    add_train_flags(cmd, o.config.train);
    if (with_m) cmd->add_option("--M", o.config.M, "epochs per iteration")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--K", o.config.K, "iterations")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--epochs-finetune", o.config.fine_tune_epochs, "fine-tune epochs")->capture_default_str();
    cmd->add_option("--tt-init", o.tt_init, "decomposed or random")->capture_default_str();
    cmd->add_option("--out", o.out, "output directory")->required();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tensor-Train convolution toolkit: decomposition, cost model, Tensor Yard"};
    app.set_version_flag("--version", std::string("ttyard ") + TTYARD_VERSION);
    app.require_subcommand(1, 1);

    DecomposeOptions dec;
    auto* c_dec = app.add_subcommand("decompose", "factorize eligible conv weights of a TYT1 container");
    c_dec->add_option("--in", dec.in)->required();
    c_dec->add_option("--out", dec.out)->required();
    c_dec->add_option("--layer", dec.layers, "restrict to these layers (repeatable)");
    c_dec->add_option("--res", dec.res, "input resolution for the MAC columns")->check(CLI::PositiveNumber)->capture_default_str();

    CostOptions cost;
    auto* c_cost = app.add_subcommand("cost", "MAC and parameter report of an architecture preset");
    c_cost->add_option("--arch", cost.arch, "resnet18|resnet34|resnet50|resnet101|toy")
        ->required()
        ->check(CLI::IsMember({"resnet18", "resnet34", "resnet50", "resnet101", "toy"}));
    c_cost->add_option("--res", cost.res)->check(CLI::PositiveNumber)->capture_default_str();
    c_cost->add_flag("--decomposed", cost.decomposed, "apply the rank heuristic to every eligible conv");
    c_cost->add_option("--csv", cost.csv, "also write CSV to this path ('-' for stdout)");

    verify::VerifyOptions ver;
    auto* c_ver = app.add_subcommand("verify", "run the invariant suite");
    c_ver->add_option("--seed", ver.seed)->capture_default_str();
    c_ver->add_flag("--inject-core-fault", ver.corrupt_core_shape, "corrupt one TT core to exercise the failure path");

    TrainOptions tr;
    auto* c_tr = app.add_subcommand("train", "train the toy residual network");
    add_data_flags(c_tr, tr.data);
    add_train_flags(c_tr, tr.config);
    c_tr->add_option("--epochs", tr.config.epochs)->check(CLI::PositiveNumber)->capture_default_str();
    c_tr->add_option("--schedule", tr.schedule)->check(CLI::IsMember({"constant", "cosine", "step"}))->capture_default_str();
    c_tr->add_option("--out", tr.out, "output directory")->required();

    YardOptions yd;
    auto* c_yard = app.add_subcommand("yard", "run Tensor Yard on the toy network");
    add_yard_flags(c_yard, yd, true);

    YardOptions ab;
    auto* c_ab = app.add_subcommand("ablate", "run Tensor Yard once per M");
    add_yard_flags(c_ab, ab, false);
    c_ab->add_option("--M-list", ab.m_list, "comma-separated epochs per iteration")
        ->required()
        ->delimiter(',')
        ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
        if (*c_dec) return run_decompose(dec);
        if (*c_cost) return run_cost(cost);
        if (*c_ver) return run_verify(ver);
        if (*c_tr) return run_train(tr);
        if (*c_yard) return run_yard(yd);
        if (*c_ab) return run_ablate(ab);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
