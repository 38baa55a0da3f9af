#pragma once

// Layer kernels for the convolutional regressor. Each layer owns its
// parameters and gradients, caches whatever its backward pass needs during
// forward, and accumulates parameter gradients in backward. Layers are
// templated on the scalar type: float for training, double for gradient
// checking.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cortical/nn/tensor.hpp"

namespace cortical::nn {

enum class LayerKind : std::uint8_t {
    conv2d = 1,
    batchnorm = 2,
    relu = 3,
    maxpool = 4,
    dropout = 5,
    flatten = 6,
    dense = 7,
    reshape = 8,
};

const char* to_string(LayerKind kind);

/// Declarative description of one layer; the model is built from a list of these.
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t filters = 0;  // conv2d
    std::size_t kernel = 4;   // conv2d
    std::size_t stride = 1;   // conv2d
    double rate = 0.0;        // dropout
    std::size_t units = 0;    // dense
    std::optional<std::pair<std::size_t, std::size_t>> pad_to;  // maxpool
    Shape target{};           // reshape

    static LayerSpec conv(std::size_t filters, std::size_t kernel, std::size_t stride);
    static LayerSpec batchnorm();
    static LayerSpec relu();
    static LayerSpec maxpool(std::optional<std::pair<std::size_t, std::size_t>> pad_to = std::nullopt);
    static LayerSpec dropout(double rate);
    static LayerSpec flatten();
    static LayerSpec dense(std::size_t units);
    static LayerSpec reshape(Shape target);
};

template <typename T>
struct ParamRef {
    std::string name;
    std::vector<T>* value = nullptr;
    std::vector<T>* grad = nullptr;  // null for non-trainable state (running statistics)
};

template <typename T>
class Layer {
public:
    explicit Layer(Shape in) : in_(in) {}
    virtual ~Layer() = default;

    virtual LayerKind kind() const = 0;
    virtual LayerSpec spec() const = 0;
    Shape input_shape() const { return in_; }
    virtual Shape output_shape() const = 0;

    virtual void forward(const Tensor<T>& x, Tensor<T>& y, Mode mode) = 0;
    /// Accumulates parameter gradients; writes dx only when `need_dx`.
    virtual void backward(const Tensor<T>& dy, Tensor<T>& dx, bool need_dx) = 0;

    virtual std::vector<ParamRef<T>> params() { return {}; }
    /// Seeds parameter initialisation (He-uniform weights, zero biases).
    virtual void initialize(std::uint64_t /*seed*/) {}
    /// Selects the random stream for the next forward (dropout masks).
    virtual void set_step(std::uint64_t /*seed*/, std::uint64_t /*step*/) {}

protected:
    Shape in_;
};

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, Shape input);

/// He-uniform: i.i.d. U[-L, L], L = sqrt(6 / fan_in).
template <typename T>
std::vector<T> he_uniform(std::size_t count, std::size_t fan_in, std::uint64_t seed);

double he_uniform_limit(std::size_t fan_in);

// ---------------------------------------------------------------------------

/// Same-padded 2-D convolution (TensorFlow convention: the extra row/column of
/// an odd total padding goes after). Weights are [kh][kw][cin][cout].
template <typename T>
class Conv2D final : public Layer<T> {
public:
    Conv2D(Shape in, std::size_t filters, std::size_t kernel, std::size_t stride);
    LayerKind kind() const override { return LayerKind::conv2d; }
    LayerSpec spec() const override { return LayerSpec::conv(filters_, kernel_, stride_); }
    Shape output_shape() const override { return out_; }
    void forward(const Tensor<T>& x, Tensor<T>& y, Mode mode) override;
    void backward(const Tensor<T>& dy, Tensor<T>& dx, bool need_dx) override;
    std::vector<ParamRef<T>> params() override;
    void initialize(std::uint64_t seed) override;

    std::vector<T> weight, bias, weight_grad, bias_grad;
    std::size_t pad_top() const { return pad_top_; }
    std::size_t pad_left() const { return pad_left_; }

private:
    void im2col(const T* x, T* cols) const;
    void col2im(const T* cols, T* dx) const;

    std::size_t filters_, kernel_, stride_;
    std::size_t pad_top_ = 0, pad_left_ = 0;
    Shape out_;
    Tensor<T> x_;
    std::vector<T> cols_, dcols_, dy_rows_;
};

/// Per-channel batch normalisation over all non-channel axes.
template <typename T>
class BatchNorm final : public Layer<T> {
public:
    static constexpr double kMomentum = 0.99;
    static constexpr double kEpsilon = 1e-5;

    explicit BatchNorm(Shape in);
    LayerKind kind() const override { return LayerKind::batchnorm; }
    LayerSpec spec() const override { return LayerSpec::batchnorm(); }
    Shape output_shape() const override { return this->in_; }
    void forward(const Tensor<T>& x, Tensor<T>& y, Mode mode) override;
    void backward(const Tensor<T>& dy, Tensor<T>& dx, bool need_dx) override;
    std::vector<ParamRef<T>> params() override;
    void initialize(std::uint64_t seed) override;

    std::vector<T> gamma, beta, running_mean, running_var, gamma_grad, beta_grad;

private:
    Mode mode_ = Mode::eval;
    std::vector<T> xhat_;
    std::vector<double> inv_std_;
    std::size_t count_ = 0;
};

template <typename T>
class ReLU final : public Layer<T> {
public:
    using Layer<T>::Layer;
    LayerKind kind() const override { return LayerKind::relu; }
    LayerSpec spec() const override { return LayerSpec::relu(); }
    Shape output_shape() const override { return this->in_; }
    void forward(const Tensor<T>& x, Tensor<T>& y, Mode mode) override;
    void backward(const Tensor<T>& dy, Tensor<T>& dx, bool need_dx) override;

private:
    std::vector<std::uint8_t> active_;
};

/// 2x2 / stride-2 max pooling in ceil mode. With `pad_to`, the input is edge
/// padded so that the pooled output has exactly that height and width.
template <typename T>
class MaxPool2x2 final : public Layer<T> {
public:
    MaxPool2x2(Shape in, std::optional<std::pair<std::size_t, std::size_t>> pad_to);
    LayerKind kind() const override { return LayerKind::maxpool; }
    LayerSpec spec() const override { return LayerSpec::maxpool(pad_to_); }
    Shape output_shape() const override { return out_; }
    void forward(const Tensor<T>& x, Tensor<T>& y, Mode mode) override;
    void backward(const Tensor<T>& dy, Tensor<T>& dx, bool need_dx) override;

private:
    std::optional<std::pair<std::size_t, std::size_t>> pad_to_;
    Shape out_;
    std::vector<std::uint32_t> argmax_;
};

/// Inverted dropout: survivors are scaled by 1/(1-rate) in train mode.
template <typename T>
class Dropout final : public Layer<T> {
public:
    Dropout(Shape in, double rate);
    LayerKind kind() const override { return LayerKind::dropout; }
    LayerSpec spec() const override { return LayerSpec::dropout(rate_); }
    Shape output_shape() const override { return this->in_; }
    void forward(const Tensor<T>& x, Tensor<T>& y, Mode mode) override;
    void backward(const Tensor<T>& dy, Tensor<T>& dx, bool need_dx) override;
    void set_step(std::uint64_t seed, std::uint64_t step) override;
    double rate() const { return rate_; }

private:
    double rate_;
    std::uint64_t stream_ = 0;
    Mode mode_ = Mode::eval;
    std::vector<T> mask_;
};

template <typename T>
class Flatten final : public Layer<T> {
public:
    using Layer<T>::Layer;
    LayerKind kind() const override { return LayerKind::flatten; }
    LayerSpec spec() const override { return LayerSpec::flatten(); }
    Shape output_shape() const override { return {1, 1, this->in_.size()}; }
    void forward(const Tensor<T>& x, Tensor<T>& y, Mode mode) override;
    void backward(const Tensor<T>& dy, Tensor<T>& dx, bool need_dx) override;
};

/// Fully connected layer on flattened input; weights are [in][out].
template <typename T>
class Dense final : public Layer<T> {
public:
    Dense(Shape in, std::size_t units);
    LayerKind kind() const override { return LayerKind::dense; }
    LayerSpec spec() const override { return LayerSpec::dense(units_); }
    Shape output_shape() const override { return {1, 1, units_}; }
    void forward(const Tensor<T>& x, Tensor<T>& y, Mode mode) override;
    void backward(const Tensor<T>& dy, Tensor<T>& dx, bool need_dx) override;
    std::vector<ParamRef<T>> params() override;
    void initialize(std::uint64_t seed) override;

    std::vector<T> weight, bias, weight_grad, bias_grad;

private:
    std::size_t units_;
    Tensor<T> x_;
};

template <typename T>
class Reshape final : public Layer<T> {
public:
    Reshape(Shape in, Shape target);
    LayerKind kind() const override { return LayerKind::reshape; }
    LayerSpec spec() const override { return LayerSpec::reshape(target_); }
    Shape output_shape() const override { return target_; }
    void forward(const Tensor<T>& x, Tensor<T>& y, Mode mode) override;
    void backward(const Tensor<T>& dy, Tensor<T>& dx, bool need_dx) override;

private:
    Shape target_;
};

}  // namespace cortical::nn
