#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cortical/eeg_features.hpp"
#include "cortical/nn/layers.hpp"

namespace cortical::nn {

/// A linear stack of layers with shape inference at construction.
template <typename T>
class Sequential {
public:
    Sequential() = default;
    Sequential(Shape input, const std::vector<LayerSpec>& specs);

    Sequential(Sequential&&) noexcept = default;
    Sequential& operator=(Sequential&&) noexcept = default;

    Shape input_shape() const { return input_; }
    Shape output_shape() const { return layers_.empty() ? input_ : layers_.back()->output_shape(); }
    std::size_t size() const { return layers_.size(); }
    Layer<T>& layer(std::size_t i) { return *layers_[i]; }
    const Layer<T>& layer(std::size_t i) const { return *layers_[i]; }
    std::vector<LayerSpec> specs() const;

    /// He-uniform weights, zero biases, identity batch-norm; layer i uses derive_seed(seed, i).
    void initialize(std::uint64_t seed);

    /// Dropout masks for the next forward are a function of (seed, step) only.
    void set_step(std::uint64_t seed, std::uint64_t step);

    const Tensor<T>& forward(const Tensor<T>& x, Mode mode);
    /// Back-propagates dL/d(output) of the most recent forward; accumulates parameter gradients.
    void backward(const Tensor<T>& dy);

    void zero_grad();
    std::vector<ParamRef<T>> params();
    std::size_t parameter_count();

private:
    Shape input_;
    std::vector<std::unique_ptr<Layer<T>>> layers_;
    std::vector<Tensor<T>> acts_;
    Tensor<T> grad_a_, grad_b_;
};

enum class TargetKind { mel, linear };

const char* to_string(TargetKind kind);
TargetKind parse_target_kind(const std::string& s);

/// frames x bins of a one-second target of `kind`.
Shape target_shape(TargetKind kind);

struct TrunkOptions {
    /// Filters in the first conv layer; the following layers double it (8 -> 128).
    std::size_t base_filters = 8;
    /// Edge-pad the pooling input so the pooled map has this shape. build_regressor
    /// sets it to 17x32 for PSD input to reproduce the reference layer table.
    std::optional<std::pair<std::size_t, std::size_t>> pool_pad_to;
};

/// Five 4x4 conv blocks (conv -> batchnorm -> ReLU -> 10% dropout; only the
/// fifth has stride 2), 2x2 max pooling and flatten.
std::vector<LayerSpec> conv_trunk(const TrunkOptions& opts);

/// Layer list of the EEG -> spectrogram regressor.
std::vector<LayerSpec> regressor_layers(Shape target, const TrunkOptions& opts);
TrunkOptions default_regressor_options(eeg::InputKind input);

std::vector<LayerSpec> classifier_layers(std::size_t n_classes, const TrunkOptions& opts);

/// Regressor for the given input / target representations, initialised from seed.
/// Without explicit options: 8 base filters, and the 17x32 pooling pad for PSD input.
Sequential<float> build_regressor(eeg::InputKind input, TargetKind target, std::uint64_t seed,
                                  std::optional<TrunkOptions> opts = std::nullopt);

/// Same trunk followed by dense 128 -> n_classes logits.
Sequential<float> build_classifier(Shape input, std::size_t n_classes, std::uint64_t seed,
                                   TrunkOptions opts = {});

// ---------------------------------------------------------------------------
// Losses. Gradients are with respect to the network output.

template <typename T>
double mse_loss(const Tensor<T>& pred, const std::vector<T>& target, Tensor<T>* grad);

/// Mean softmax cross-entropy over the batch; logits are n x classes.
template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, const std::vector<std::size_t>& labels, Tensor<T>* grad);

template <typename T>
std::vector<double> softmax(const T* logits, std::size_t classes);

}  // namespace cortical::nn
