#include "ttyard/yard.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ttyard::yard {

template <typename T>
MixedOp<T>::MixedOp(std::size_t layer_id, std::unique_ptr<nn::Conv2d<T>> conv, std::unique_ptr<nn::TTConv<T>> tt)
    : layer_id_(layer_id), alpha_(Tensor<T>({1}, static_cast<T>(kInitialAlpha))), conv_(std::move(conv)),
      tt_(std::move(tt)) {
    if (!conv_ || !tt_) throw std::invalid_argument("MixedOp: both branches are required");
    alpha_.decay = false;
    alpha_.unit_interval = true;
}

template <typename T>
nn::Var MixedOp<T>::forward(nn::Tape<T>& tape, nn::Var x) {
    const nn::Var a = conv_->forward(tape, x);
    const nn::Var b = tt_->forward(tape, x);
    return nn::mix(tape, a, b, alpha_);
}

template <typename T>
void MixedOp<T>::own_parameters(std::vector<std::pair<std::string, nn::Parameter<T>*>>& out) {
    out.emplace_back("alpha", &alpha_);
}

template <typename T>
void MixedOp<T>::children(std::vector<std::pair<std::string, Slot*>>& out) {
    out.emplace_back("conv", &conv_);
    out.emplace_back("tt", &tt_);
}

template <typename T>
nn::FeatureShape MixedOp<T>::describe(const std::string& path, nn::FeatureShape in,
                                      std::vector<ArchLayer>& out) const {
    const nn::FeatureShape y = conv_->describe(path + ".conv", in, out);
    tt_->describe(path + ".tt", in, out);
    return y;
}

template <typename T>
nn::Conv2d<T>& MixedOp<T>::conv_branch() {
    return dynamic_cast<nn::Conv2d<T>&>(*conv_);
}

template <typename T>
nn::TTConv<T>& MixedOp<T>::tt_branch() {
    return dynamic_cast<nn::TTConv<T>&>(*tt_);
}

std::string to_string(TTInit init) { return init == TTInit::decomposed ? "decomposed" : "random"; }

namespace {

template <typename T>
std::unique_ptr<nn::TTConv<T>> make_tt_branch(const nn::Conv2d<T>& conv, const RankChoice& ranks, TTInit init,
                                              Rng& rng) {
    const ConvSpec& spec = conv.spec();
    DenseTensor weight = conv.weight().value.template cast<double>();
    if (init == TTInit::random) {
        const std::size_t fan_in = spec.in_channels / spec.groups * spec.kernel * spec.kernel;
        weight = random_normal<double>(spec.weight_dims(), rng, std::sqrt(2.0 / static_cast<double>(fan_in)));
    }
    std::optional<std::vector<double>> bias;
    if (const auto* b = conv.bias()) {
        const Tensor<double> bd = b->value.template cast<double>();
        bias = std::vector<double>(bd.values().begin(), bd.values().end());
    }
    const KernelFactors factors = factorize_kernel(weight, spec, ranks, bias);
    return std::make_unique<nn::TTConv<T>>(lower(factors), spec);
}

}  // namespace

template <typename T>
std::vector<std::pair<std::string, MixedOp<T>*>> mixed_ops(nn::Model<T>& model) {
    std::vector<std::pair<std::string, MixedOp<T>*>> out;
    nn::for_each_slot<T>(model.root(), [&](const std::string& path, typename nn::Module<T>::Slot& slot) {
        if (auto* m = dynamic_cast<MixedOp<T>*>(slot.get())) out.emplace_back(path, m);
    });
    return out;
}

template <typename T>
std::vector<YardLayer> wrap_model(nn::Model<T>& model, TTInit init, std::uint64_t seed) {
    if (!mixed_ops(model).empty()) throw std::logic_error("wrap_model: model is already wrapped");
    Rng rng(seed);
    std::vector<std::pair<std::string, typename nn::Module<T>::Slot*>> convs;
    nn::for_each_slot<T>(model.root(), [&](const std::string& path, typename nn::Module<T>::Slot& slot) {
        if (dynamic_cast<nn::Conv2d<T>*>(slot.get())) convs.emplace_back(path, &slot);
    });
    std::vector<YardLayer> layers;
    for (auto& [path, slot] : convs) {
        auto* conv = static_cast<nn::Conv2d<T>*>(slot->get());
        const auto ranks = select_ranks(conv->spec());
        if (!ranks) continue;
        const std::size_t id = layers.size() + 1;
        auto tt = make_tt_branch(*conv, *ranks, init, rng);
        // Report the ranks actually realised (factorization may cap them).
        YardLayer layer{id, path, conv->spec(), tt->ranks()};
        std::unique_ptr<nn::Conv2d<T>> owned(static_cast<nn::Conv2d<T>*>(slot->release()));
        *slot = std::make_unique<MixedOp<T>>(id, std::move(owned), std::move(tt));
        layers.push_back(std::move(layer));
    }
    if (layers.empty()) {
        throw std::invalid_argument("wrap_model: no convolution satisfies the decomposition rule (min(C, S) >= " +
                                    std::to_string(kMinDecomposableChannels) + ")");
    }
    return layers;
}

std::size_t select_replacement(std::span<const Candidate> candidates) {
    if (candidates.empty()) throw std::invalid_argument("select_replacement: no candidates");
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const Candidate& c = candidates[i];
        const Candidate& b = candidates[best];
        if (c.alpha < b.alpha || (c.alpha == b.alpha && c.layer_id < b.layer_id)) best = i;
    }
    return best;
}

namespace {

template <typename T>
bool swap_out(nn::Model<T>& model, std::size_t layer_id, bool keep_tt) {
    typename nn::Module<T>::Slot* target = nullptr;
    nn::for_each_slot<T>(model.root(), [&](const std::string&, typename nn::Module<T>::Slot& slot) {
        auto* m = dynamic_cast<MixedOp<T>*>(slot.get());
        if (m && !target && m->layer_id() == layer_id) target = &slot;
    });
    if (!target) return false;
    auto* m = static_cast<MixedOp<T>*>(target->get());
    auto branch = keep_tt ? m->release_tt() : m->release_conv();
    *target = std::move(branch);
    return true;
}

}  // namespace

template <typename T>
bool replace_with_tt(nn::Model<T>& model, std::size_t layer_id) {
    return swap_out(model, layer_id, true);
}

template <typename T>
std::size_t finalize(nn::Model<T>& model) {
    std::size_t n = 0;
    for (const auto& [path, op] : mixed_ops(model)) n += swap_out(model, op->layer_id(), false);
    return n;
}

void YardConfig::validate() const {
    if (M < 1) throw std::invalid_argument("M must be at least 1");
    if (K < 1) throw std::invalid_argument("K must be at least 1");
    train.validate();
}

std::size_t YardReport::replacements() const {
    return static_cast<std::size_t>(
        std::count_if(iterations.begin(), iterations.end(), [](const IterationRecord& r) { return r.replaced; }));
}

std::vector<std::size_t> YardReport::replacement_sequence() const {
    std::vector<std::size_t> out;
    for (const auto& r : iterations)
        if (r.replaced) out.push_back(r.layer_id);
    return out;
}

void YardReport::write_csv(std::ostream& out) const {
    out << "iteration,layer_id,alpha,replaced\n";
    const auto old = out.precision(9);
    for (const auto& r : iterations) {
        out << r.iteration << ',' << r.layer_id << ',' << r.alpha << ',' << (r.replaced ? "true" : "false") << '\n';
    }
    out.precision(old);
}

std::string YardReport::summary_json() const {
    using nlohmann::json;
    json j;
    j["layers"] = json::array();
    for (const auto& a : assignment) {
        json l{{"layer_id", a.layer_id}, {"path", a.path}, {"assignment", a.tt ? "ttconv" : "conv"}};
        if (a.ranks.kind == RankKind::spatial) {
            l["ranks"] = {{"R1", a.ranks.r1}, {"R2", a.ranks.r2}};
        } else {
            l["ranks"] = {{"R", a.ranks.r}};
        }
        j["layers"].push_back(std::move(l));
    }
    j["iterations"] = json::array();
    for (const auto& r : iterations) {
        json alphas = json::object();
        for (const auto& c : r.alphas) alphas[std::to_string(c.layer_id)] = c.alpha;
        j["iterations"].push_back(
            {{"iteration", r.iteration}, {"layer_id", r.layer_id}, {"alpha", r.alpha}, {"replaced", r.replaced},
             {"alphas", std::move(alphas)}});
    }
    j["replacements"] = replacements();
    j["cost"] = {
        {"baseline_macs", baseline_cost.total_macs},
        {"baseline_params", baseline_cost.total_params},
        {"final_macs", final_cost.total_macs},
        {"final_params", final_cost.total_params},
        {"delta_macs", static_cast<long long>(final_cost.total_macs) - static_cast<long long>(baseline_cost.total_macs)},
        {"delta_params",
         static_cast<long long>(final_cost.total_params) - static_cast<long long>(baseline_cost.total_params)},
    };
    j["final_train_accuracy"] = final_train_accuracy;
    j["final_test_accuracy"] = final_test_accuracy;
    return j.dump(2);
}

namespace {

template <typename T>
void log_epoch(nn::TrainingLog* log, nn::Model<T>& model, const Dataset* test, std::size_t epoch, std::size_t step,
               double lr, const nn::EpochStats& stats) {
    if (!log) return;
    nn::TrainingLog::Row row{static_cast<double>(epoch), step, lr, stats.loss, stats.accuracy,
                             std::numeric_limits<double>::quiet_NaN(), {}};
    if (test) row.eval_acc = nn::evaluate(model, *test).accuracy;
    row.alphas.assign(log->alpha_columns().size(), std::numeric_limits<double>::quiet_NaN());
    for (const auto& [path, op] : mixed_ops(model)) {
        if (op->layer_id() - 1 < row.alphas.size()) row.alphas[op->layer_id() - 1] = op->alpha();
    }
    log->append(std::move(row));
}

}  // namespace

template <typename T>
IterationRecord yard_iteration(nn::Model<T>& model, std::size_t iteration, const Dataset& train,
                               const YardConfig& config, Rng& shuffle_rng, std::size_t& epoch_counter,
                               std::size_t& global_step, nn::TrainingLog* log, const Dataset* test) {
    if (mixed_ops(model).empty()) throw std::logic_error("yard_iteration: no MixedOp remains");
    const double lr = config.train.initial_lr();
    const auto constant = [lr](double) { return lr; };
    for (std::size_t e = 0; e < config.M; ++e) {
        const auto stats = nn::train_epoch(model, train, config.train, shuffle_rng, epoch_counter, constant,
                                           global_step);
        ++epoch_counter;
        log_epoch(log, model, test, epoch_counter, global_step, lr, stats);
    }

    IterationRecord rec{iteration, {}, 0, 0.0, false};
    for (const auto& [path, op] : mixed_ops(model)) rec.alphas.push_back({op->layer_id(), op->alpha()});
    const Candidate pick = rec.alphas[select_replacement(rec.alphas)];
    rec.layer_id = pick.layer_id;
    rec.alpha = pick.alpha;
    if (pick.alpha < 0.5) rec.replaced = replace_with_tt(model, pick.layer_id);
    return rec;
}

template <typename T>
YardResult run_yard(nn::Model<T>& model, const Dataset& train, const Dataset& test, const YardConfig& config) {
    config.validate();
    YardResult result;
    YardReport& report = result.report;
    report.baseline_cost = model_report(model.describe());
    report.layers = wrap_model(model, config.init, config.train.seed ^ 0x77ULL);
    if (config.K > report.layers.size()) {
        throw std::invalid_argument("K = " + std::to_string(config.K) + " exceeds the number of decomposable layers (" +
                                    std::to_string(report.layers.size()) + ")");
    }
    std::vector<std::string> columns;
    for (const auto& l : report.layers) columns.push_back(std::to_string(l.layer_id));
    result.log = nn::TrainingLog(columns);

    Rng shuffle(config.train.seed ^ 0x5eedULL);
    std::size_t epoch = 0, step = 0;
    for (std::size_t k = 1; k <= config.K; ++k) {
        report.iterations.push_back(
            yard_iteration(model, k, train, config, shuffle, epoch, step, &result.log, &test));
    }

    finalize(model);

    nn::TrainConfig fine = config.train;
    fine.epochs = config.fine_tune_epochs;
    const auto lr_at = [&fine](double e) { return nn::learning_rate(fine, e); };
    for (std::size_t e = 0; e < config.fine_tune_epochs; ++e) {
        const auto stats = nn::train_epoch(model, train, fine, shuffle, e, lr_at, step);
        ++epoch;
        log_epoch(&result.log, model, &test, epoch, step, nn::learning_rate(fine, static_cast<double>(e + 1)), stats);
    }

    const auto replaced = report.replacement_sequence();
    for (const auto& l : report.layers) {
        const bool tt = std::find(replaced.begin(), replaced.end(), l.layer_id) != replaced.end();
        report.assignment.push_back({l.layer_id, l.path, tt, l.ranks});
    }
    report.final_cost = model_report(model.describe());
    report.final_train_accuracy = nn::evaluate(model, train).accuracy;
    report.final_test_accuracy = nn::evaluate(model, test).accuracy;
    return result;
}

#define TTYARD_INSTANTIATE_YARD(T)                                                                              \
    template class MixedOp<T>;                                                                                  \
    template std::vector<YardLayer> wrap_model<T>(nn::Model<T>&, TTInit, std::uint64_t);                        \
    template std::vector<std::pair<std::string, MixedOp<T>*>> mixed_ops<T>(nn::Model<T>&);                      \
    template bool replace_with_tt<T>(nn::Model<T>&, std::size_t);                                               \
    template std::size_t finalize<T>(nn::Model<T>&);                                                            \
    template IterationRecord yard_iteration<T>(nn::Model<T>&, std::size_t, const Dataset&, const YardConfig&,   \
                                               Rng&, std::size_t&, std::size_t&, nn::TrainingLog*,             \
                                               const Dataset*);                                                 \
    template YardResult run_yard<T>(nn::Model<T>&, const Dataset&, const Dataset&, const YardConfig&);

TTYARD_INSTANTIATE_YARD(float)
TTYARD_INSTANTIATE_YARD(double)

}  // namespace ttyard::yard
