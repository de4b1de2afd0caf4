#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ttyard/cost_model.hpp"
#include "ttyard/data_io.hpp"
#include "ttyard/nn/model.hpp"
#include "ttyard/nn/train.hpp"

namespace ttyard::yard {

/// alpha * conv(x) + (1 - alpha) * tt(x) with a trainable alpha kept in [0, 1].
template <typename T>
class MixedOp final : public nn::Module<T> {
public:
    using Slot = typename nn::Module<T>::Slot;

    static constexpr double kInitialAlpha = 0.5;

    MixedOp(std::size_t layer_id, std::unique_ptr<nn::Conv2d<T>> conv, std::unique_ptr<nn::TTConv<T>> tt);

    std::string kind() const override { return "mixed"; }
    nn::Var forward(nn::Tape<T>& tape, nn::Var x) override;
    void own_parameters(std::vector<std::pair<std::string, nn::Parameter<T>*>>& out) override;
    void children(std::vector<std::pair<std::string, Slot*>>& out) override;
    /// Reports both branches (conv under "<path>.conv", TTConv under "<path>.tt").
    nn::FeatureShape describe(const std::string& path, nn::FeatureShape in,
                              std::vector<ArchLayer>& out) const override;

    std::size_t layer_id() const noexcept { return layer_id_; }
    double alpha() const { return static_cast<double>(alpha_.value[0]); }
    void set_alpha(double a) { alpha_.value[0] = static_cast<T>(a); }
    nn::Parameter<T>& alpha_parameter() noexcept { return alpha_; }

    nn::Conv2d<T>& conv_branch();
    nn::TTConv<T>& tt_branch();
    Slot release_conv() { return std::move(conv_); }
    Slot release_tt() { return std::move(tt_); }

private:
    std::size_t layer_id_;
    nn::Parameter<T> alpha_;
    Slot conv_;
    Slot tt_;
};

/// How the TTConv branch of a new MixedOp is initialised.
enum class TTInit {
    decomposed,  // factorize_kernel of the conv branch's current weight
    random,      // factorization of an independent Kaiming-initialised kernel
};

std::string to_string(TTInit init);

/// One decomposable layer in the yard registry. Ids start at 1.
struct YardLayer {
    std::size_t layer_id;
    std::string path;
    ConvSpec spec;
    RankChoice ranks;
};

/**
 * Replaces every conv that select_ranks accepts by a MixedOp with alpha 0.5.
 * Throws if the model already holds MixedOps or has no applicable conv.
 */
template <typename T>
std::vector<YardLayer> wrap_model(nn::Model<T>& model, TTInit init = TTInit::decomposed, std::uint64_t seed = 0);

/// MixedOps currently present, in traversal order, with their slot paths.
template <typename T>
std::vector<std::pair<std::string, MixedOp<T>*>> mixed_ops(nn::Model<T>& model);

struct Candidate {
    std::size_t layer_id;
    double alpha;
};

/// Index of the smallest alpha; ties go to the smallest layer id. Requires a non-empty list.
std::size_t select_replacement(std::span<const Candidate> candidates);

/// Swaps MixedOp `layer_id` for its TTConv branch. Returns false if no such op remains.
template <typename T>
bool replace_with_tt(nn::Model<T>& model, std::size_t layer_id);

/// Collapses every remaining MixedOp to its conv branch, weights unchanged and unscaled.
template <typename T>
std::size_t finalize(nn::Model<T>& model);

struct YardConfig {
    std::size_t M = 1;                 // epochs per iteration
    std::size_t K = 4;                 // iterations
    std::size_t fine_tune_epochs = 10;
    nn::TrainConfig train;             // batch size, optimizer, seed; lr schedule applies to fine-tuning
    TTInit init = TTInit::decomposed;

    void validate() const;
};

struct IterationRecord {
    std::size_t iteration;
    std::vector<Candidate> alphas;  // every remaining MixedOp after training
    std::size_t layer_id;           // argmin
    double alpha;
    bool replaced;
};

struct LayerAssignment {
    std::size_t layer_id;
    std::string path;
    bool tt;
    RankChoice ranks;
};

struct YardReport {
    std::vector<YardLayer> layers;
    std::vector<IterationRecord> iterations;
    std::vector<LayerAssignment> assignment;
    ModelReport baseline_cost;
    ModelReport final_cost;
    double final_train_accuracy = 0;
    double final_test_accuracy = 0;

    std::size_t replacements() const;
    /// Layer ids in replacement order.
    std::vector<std::size_t> replacement_sequence() const;

    /// iteration,layer_id,alpha,replaced
    void write_csv(std::ostream& out) const;
    /// Final assignment and cost deltas as JSON.
    std::string summary_json() const;
};

/// Trains M epochs at the constant base lr, then applies at most one replacement.
template <typename T>
IterationRecord yard_iteration(nn::Model<T>& model, std::size_t iteration, const Dataset& train,
                               const YardConfig& config, Rng& shuffle_rng, std::size_t& epoch_counter,
                               std::size_t& global_step, nn::TrainingLog* log = nullptr,
                               const Dataset* test = nullptr);

struct YardResult {
    YardReport report;
    nn::TrainingLog log;
};

/// wrap -> K iterations -> finalize -> fine-tune (warmup + schedule restarted).
template <typename T>
YardResult run_yard(nn::Model<T>& model, const Dataset& train, const Dataset& test,
                    const YardConfig& config);

}  // namespace ttyard::yard
