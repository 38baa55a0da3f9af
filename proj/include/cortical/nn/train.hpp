#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cortical/nn/model.hpp"
#include "cortical/nn/optim.hpp"

namespace cortical::nn {

/// In-memory training data. Inputs are n x H x W x 1; regression targets are
/// stored flat (n x target elements), class labels one per example.
struct Dataset {
    Tensor<float> inputs;
    std::vector<float> targets;
    std::vector<std::size_t> labels;

    std::size_t size() const { return inputs.n; }
};

enum class Objective { mse, cross_entropy };

/// What TrainReport's per-epoch training loss measures: the running mean of
/// the mini-batch losses (train mode, dropout active), or an eval-mode pass
/// over the whole training set after the epoch's updates.
enum class TrainLossMode { running, evaluated };

struct TrainConfig {
    std::size_t epochs = 400;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    /// Stop after this many epochs without a validation improvement larger than min_delta.
    std::size_t patience = 20;
    double min_delta = 1e-5;
    /// Optional early exit once the epoch's training loss falls below this value.
    std::optional<double> stop_at_train_loss;
    AdamConfig adam{};
    Objective objective = Objective::mse;
    TrainLossMode train_loss = TrainLossMode::running;
    /// Plain-text progress lines (one per epoch) when set.
    std::ostream* log = nullptr;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double wall_ms = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
    bool plateaued = false;
    std::uint64_t seed = 0;
    Objective objective = Objective::mse;
    TrainLossMode train_loss_mode = TrainLossMode::running;

    double final_train_loss() const { return epochs.empty() ? 0.0 : epochs.back().train_loss; }

    /// Fixed-width table, one row per epoch (wall-clock excluded so reruns compare equal).
    std::string table() const;
    /// CSV records: epoch,train_<loss>,val_<loss>.
    std::string records() const;
    /// CSV records: epoch,wall_ms.
    std::string timing() const;
};

/// Mini-batch training with Adam. Shuffling, dropout masks and initialisation
/// are functions of the seed only, so the report and final parameters are
/// reproducible. The parameters with the best validation loss are restored on
/// return. Throws DivergenceError when the loss or a gradient becomes non-finite.
TrainReport train(Sequential<float>& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg);

/// Eval-mode forward over the whole set in batches; returns n x output elements.
Tensor<float> predict(Sequential<float>& model, const Tensor<float>& inputs, std::size_t batch_size = 32);

/// Eval-mode loss of the model on a set.
double evaluate_loss(Sequential<float>& model, const Dataset& set, Objective objective,
                     std::size_t batch_size = 32);

/// Top-1 predicted class per example.
std::vector<std::size_t> predict_classes(Sequential<float>& model, const Tensor<float>& inputs,
                                         std::size_t batch_size = 32);

/// Batch boundaries covering [0, n): full batches of `batch_size`, with a
/// trailing singleton merged into the previous batch (batch norm needs >= 2).
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch_size);

}  // namespace cortical::nn
