#include "ttyard/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace ttyard::nn {

std::string to_string(Schedule s) {
    switch (s) {
        case Schedule::constant: return "constant";
        case Schedule::cosine: return "cosine";
        case Schedule::step: return "step";
    }
    return "unknown";
}

Schedule schedule_from_string(const std::string& name) {
    if (name == "constant") return Schedule::constant;
    if (name == "cosine") return Schedule::cosine;
    if (name == "step") return Schedule::step;
    throw std::invalid_argument("unknown schedule '" + name + "' (expected constant, cosine or step)");
}

void TrainConfig::validate() const {
    if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
    if (initial_lr() < 0) throw std::invalid_argument("learning rate must be non-negative");
    if (warmup_epochs < 0) throw std::invalid_argument("warmup_epochs must be non-negative");
    if (momentum < 0 || momentum >= 1) throw std::invalid_argument("momentum must lie in [0, 1)");
    if (weight_decay < 0) throw std::invalid_argument("weight_decay must be non-negative");
    if (step_period <= 0) throw std::invalid_argument("step_period must be positive");
}

double learning_rate(const TrainConfig& config, double epoch) {
    const double base = config.initial_lr();
    epoch = std::max(epoch, 0.0);
    if (epoch < config.warmup_epochs) return base * epoch / config.warmup_epochs;
    switch (config.schedule) {
        case Schedule::constant: return base;
        case Schedule::step: return base * std::pow(config.step_factor, std::floor(epoch / config.step_period));
        case Schedule::cosine: {
            const double span = static_cast<double>(config.epochs) - config.warmup_epochs;
            if (span <= 0) return base;
            const double t = std::clamp((epoch - config.warmup_epochs) / span, 0.0, 1.0);
            return 0.5 * base * (1.0 + std::cos(std::numbers::pi * t));
        }
    }
    return base;
}

template <typename T>
void Sgd<T>::step(const std::vector<std::pair<std::string, Parameter<T>*>>& params, double lr) const {
    const T m = static_cast<T>(momentum_);
    const T wd = static_cast<T>(weight_decay_);
    const T step = static_cast<T>(lr);
    for (const auto& [name, p] : params) {
        if (p->velocity.size() != p->value.size()) p->velocity = Tensor<T>(p->value.dims());
        auto w = p->value.data();
        auto g = p->grad.data();
        auto v = p->velocity.data();
        const bool decay = p->decay;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const T gi = decay ? g[i] + wd * w[i] : g[i];
            v[i] = m * v[i] + gi;
            w[i] -= step * v[i];
        }
        if (p->unit_interval) {
            for (auto& x : w) x = std::clamp(x, T{0}, T{1});
        }
    }
}

namespace {

template <typename T>
std::size_t count_correct(const Tensor<T>& logits, std::span<const int> labels) {
    const std::size_t k = logits.dim(1);
    std::size_t correct = 0;
    for (std::size_t n = 0; n < labels.size(); ++n) {
        const T* row = logits.raw() + n * k;
        const auto best = static_cast<int>(std::max_element(row, row + k) - row);
        correct += best == labels[n];
    }
    return correct;
}

template <typename T>
Tensor<T> batch_as(const TensorF& images) {
    if constexpr (std::is_same_v<T, float>) {
        return images;
    } else {
        return images.template cast<T>();
    }
}

}  // namespace

template <typename T>
EpochStats train_epoch(Model<T>& model, const Dataset& data, const TrainConfig& config, Rng& shuffle_rng,
                       std::size_t epoch_index, const std::function<double(double)>& lr_at,
                       std::size_t& global_step, const StepHook& hook) {
    config.validate();
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    const auto params = model.parameters();
    const Sgd<T> sgd(config.momentum, config.weight_decay);
    const std::size_t steps = (order.size() + config.batch_size - 1) / config.batch_size;
    EpochStats stats;
    double loss_sum = 0;
    std::size_t correct = 0;
    std::vector<int> labels;
    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t lo = s * config.batch_size;
        const std::size_t hi = std::min(order.size(), lo + config.batch_size);
        const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
        const Tensor<T> images = batch_as<T>(data.gather(idx, labels));

        for (const auto& [name, p] : params) p->zero_grad();
        Tape<T> tape(true, true);
        const auto out = forward_loss(tape, model, images, labels);
        const double loss = static_cast<double>(tape.value(out.loss)[0]);
        if (!std::isfinite(loss)) {
            throw std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(epoch_index) +
                                     ", step " + std::to_string(s));
        }
        tape.backward(out.loss);
        const double epoch_pos = static_cast<double>(epoch_index) + static_cast<double>(s) / steps;
        const double lr = lr_at(epoch_pos);
        sgd.step(params, lr);
        ++global_step;

        loss_sum += loss * static_cast<double>(idx.size());
        correct += count_correct(tape.value(out.logits), labels);
        if (hook) hook(epoch_pos, global_step, lr, loss);
    }
    stats.steps = steps;
    stats.loss = loss_sum / static_cast<double>(order.size());
    stats.accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    return stats;
}

template <typename T>
EvalStats evaluate(Model<T>& model, const Dataset& data, std::size_t batch_size) {
    EvalStats stats;
    double loss_sum = 0;
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    std::vector<int> labels;
    for (std::size_t lo = 0; lo < data.size(); lo += batch_size) {
        const std::size_t hi = std::min(data.size(), lo + batch_size);
        idx.resize(hi - lo);
        std::iota(idx.begin(), idx.end(), lo);
        const Tensor<T> images = batch_as<T>(data.gather(idx, labels));
        Tape<T> tape(false, false);
        const auto out = forward_loss(tape, model, images, labels);
        loss_sum += static_cast<double>(tape.value(out.loss)[0]) * static_cast<double>(idx.size());
        correct += count_correct(tape.value(out.logits), labels);
    }
    stats.loss = loss_sum / static_cast<double>(data.size());
    stats.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    return stats;
}

void TrainingLog::append(Row row) {
    row.alphas.resize(alpha_columns_.size(), std::numeric_limits<double>::quiet_NaN());
    rows_.push_back(std::move(row));
}

void TrainingLog::write_csv(std::ostream& out) const {
    out << "epoch,step,lr,loss,train_acc,eval_acc";
    for (const auto& c : alpha_columns_) out << ",alpha_" << c;
    out << '\n';
    const auto old = out.precision(9);
    for (const auto& r : rows_) {
        out << r.epoch << ',' << r.step << ',' << r.lr << ',' << r.loss << ',' << r.train_acc << ',' << r.eval_acc;
        for (double a : r.alphas) {
            out << ',';
            if (!std::isnan(a)) out << a;
        }
        out << '\n';
    }
    out.precision(old);
}

template <typename T>
TrainingLog fit(Model<T>& model, const Dataset& train, const Dataset& test, const TrainConfig& config) {
    config.validate();
    TrainingLog log;
    Rng shuffle(config.seed ^ 0x5eedULL);
    std::size_t step = 0;
    const auto lr_at = [&](double e) { return learning_rate(config, e); };
    for (std::size_t e = 0; e < config.epochs; ++e) {
        const EpochStats tr = train_epoch(model, train, config, shuffle, e, lr_at, step);
        const EvalStats ev = evaluate(model, test);
        log.append({static_cast<double>(e + 1), step, learning_rate(config, static_cast<double>(e + 1)), tr.loss,
                    tr.accuracy, ev.accuracy, {}});
    }
    return log;
}

#define TTYARD_INSTANTIATE_TRAIN(T)                                                                             \
    template class Sgd<T>;                                                                                      \
    template EpochStats train_epoch<T>(Model<T>&, const Dataset&, const TrainConfig&, Rng&, std::size_t,        \
                                       const std::function<double(double)>&, std::size_t&, const StepHook&);    \
    template EvalStats evaluate<T>(Model<T>&, const Dataset&, std::size_t);                                     \
    template TrainingLog fit<T>(Model<T>&, const Dataset&, const Dataset&, const TrainConfig&);

TTYARD_INSTANTIATE_TRAIN(float)
TTYARD_INSTANTIATE_TRAIN(double)

}  // namespace ttyard::nn
