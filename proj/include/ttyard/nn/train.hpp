#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ttyard/data_io.hpp"
#include "ttyard/nn/model.hpp"

namespace ttyard::nn {

enum class Schedule { constant, cosine, step };

std::string to_string(Schedule s);
Schedule schedule_from_string(const std::string& name);

struct TrainConfig {
    std::size_t batch_size = 64;
    std::optional<double> base_lr;  // default 0.1 * batch_size / 256
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double warmup_epochs = 2;
    Schedule schedule = Schedule::cosine;
    double step_period = 30;
    double step_factor = 0.1;
    std::size_t epochs = 10;
    std::uint64_t seed = 1;

    double initial_lr() const { return base_lr.value_or(0.1 * static_cast<double>(batch_size) / 256.0); }
    void validate() const;
};

/// Learning rate at a fractional epoch: linear warmup from 0, then the schedule.
double learning_rate(const TrainConfig& config, double epoch);

/**
 * Momentum SGD with decoupled flags per parameter:
 *   g = grad + wd * w (when decay), v = m v + g, w -= lr v,
 * then parameters marked unit_interval are clamped to [0, 1].
 */
template <typename T>
class Sgd {
public:
    Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

    void step(const std::vector<std::pair<std::string, Parameter<T>*>>& params, double lr) const;

private:
    double momentum_;
    double weight_decay_;
};

struct EpochStats {
    double loss = 0;
    double accuracy = 0;
    std::size_t steps = 0;
};

/// Called after every optimizer step with (fractional epoch, global step, lr, batch loss).
using StepHook = std::function<void(double, std::size_t, double, double)>;

/**
 * One pass over a shuffled permutation of `data`. The lr for each step is
 * lr_at(epoch_index + step / steps_per_epoch). A trailing partial batch is kept.
 */
template <typename T>
EpochStats train_epoch(Model<T>& model, const Dataset& data, const TrainConfig& config, Rng& shuffle_rng,
                       std::size_t epoch_index, const std::function<double(double)>& lr_at,
                       std::size_t& global_step, const StepHook& hook = {});

struct EvalStats {
    double loss = 0;
    double accuracy = 0;
};

/// Eval-mode pass (BatchNorm uses running statistics); does not record gradients.
template <typename T>
EvalStats evaluate(Model<T>& model, const Dataset& data, std::size_t batch_size = 128);

/// Rows of: epoch, step, lr, loss, train_acc, eval_acc, then one alpha_<id> column per tracked value.
class TrainingLog {
public:
    explicit TrainingLog(std::vector<std::string> alpha_columns = {}) : alpha_columns_(std::move(alpha_columns)) {}

    struct Row {
        double epoch;
        std::size_t step;
        double lr;
        double loss;
        double train_acc;
        double eval_acc;
        std::vector<double> alphas;  // NaN for values not present
    };

    void append(Row row);
    const std::vector<Row>& rows() const noexcept { return rows_; }
    const std::vector<std::string>& alpha_columns() const noexcept { return alpha_columns_; }
    void write_csv(std::ostream& out) const;

private:
    std::vector<std::string> alpha_columns_;
    std::vector<Row> rows_;
};

/// Plain supervised training with warmup + schedule; one log row per epoch.
template <typename T>
TrainingLog fit(Model<T>& model, const Dataset& train, const Dataset& test, const TrainConfig& config);

}  // namespace ttyard::nn
