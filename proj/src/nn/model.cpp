#include "cortical/nn/model.hpp"

#include <algorithm>
#include <cmath>

#include "cortical/common.hpp"
#include "cortical/dsp.hpp"

namespace cortical::nn {

template <typename T>
Sequential<T>::Sequential(Shape input, const std::vector<LayerSpec>& specs) : input_(input) {
    Shape cur = input;
    for (const auto& s : specs) {
        layers_.push_back(make_layer<T>(s, cur));
        cur = layers_.back()->output_shape();
    }
    acts_.resize(layers_.size());
}

template <typename T>
std::vector<LayerSpec> Sequential<T>::specs() const {
    std::vector<LayerSpec> out;
    out.reserve(layers_.size());
    for (const auto& l : layers_) out.push_back(l->spec());
    return out;
}

template <typename T>
void Sequential<T>::initialize(std::uint64_t seed) {
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->initialize(derive_seed(seed, i, 1));
}

template <typename T>
void Sequential<T>::set_step(std::uint64_t seed, std::uint64_t step) {
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->set_step(derive_seed(seed, i, 2), step);
}

template <typename T>
const Tensor<T>& Sequential<T>::forward(const Tensor<T>& x, Mode mode) {
    if (layers_.empty()) throw InvalidInput("Sequential: no layers");
    if (x.shape != input_) throw InvalidInput("Sequential: input " + x.shape.str() + " != " + input_.str());
    const Tensor<T>* cur = &x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        layers_[i]->forward(*cur, acts_[i], mode);
        cur = &acts_[i];
    }
    return *cur;
}

template <typename T>
void Sequential<T>::backward(const Tensor<T>& dy) {
    grad_a_ = dy;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        layers_[i]->backward(grad_a_, grad_b_, i > 0);
        std::swap(grad_a_, grad_b_);
    }
}

template <typename T>
void Sequential<T>::zero_grad() {
    for (auto& p : params())
        if (p.grad) std::fill(p.grad->begin(), p.grad->end(), T{});
}

template <typename T>
std::vector<ParamRef<T>> Sequential<T>::params() {
    std::vector<ParamRef<T>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
        for (auto p : layers_[i]->params()) {
            p.name = std::to_string(i) + "." + to_string(layers_[i]->kind()) + "." + p.name;
            out.push_back(p);
        }
    return out;
}

template <typename T>
std::size_t Sequential<T>::parameter_count() {
    std::size_t n = 0;
    for (auto& p : params())
        if (p.grad) n += p.value->size();
    return n;
}

template class Sequential<float>;
template class Sequential<double>;

// ---------------------------------------------------------------------------

const char* to_string(TargetKind kind) { return kind == TargetKind::mel ? "mel" : "linear"; }

TargetKind parse_target_kind(const std::string& s) {
    if (s == "mel") return TargetKind::mel;
    if (s == "linear") return TargetKind::linear;
    throw InvalidInput("unknown target kind '" + s + "' (expected mel or linear)");
}

Shape target_shape(TargetKind kind) {
    const std::size_t frames = dsp::frame_count(static_cast<std::size_t>(dsp::kAudioRate), dsp::kHop);
    const std::size_t bins = kind == TargetKind::mel ? dsp::kMelBands : dsp::kFftSize / 2 + 1;
    return {frames, bins, 1};
}

std::vector<LayerSpec> conv_trunk(const TrunkOptions& opts) {
    if (opts.base_filters == 0) throw InvalidInput("conv_trunk: base_filters must be positive");
    std::vector<LayerSpec> layers;
    for (std::size_t i = 0; i < 5; ++i) {
        layers.push_back(LayerSpec::conv(opts.base_filters << i, 4, i == 4 ? 2 : 1));
        layers.push_back(LayerSpec::batchnorm());
        layers.push_back(LayerSpec::relu());
        layers.push_back(LayerSpec::dropout(0.10));
    }
    layers.push_back(LayerSpec::maxpool(opts.pool_pad_to));
    layers.push_back(LayerSpec::flatten());
    return layers;
}

namespace {

void append_head(std::vector<LayerSpec>& layers, std::size_t outputs) {
    layers.push_back(LayerSpec::dense(128));
    layers.push_back(LayerSpec::batchnorm());
    layers.push_back(LayerSpec::relu());
    layers.push_back(LayerSpec::dropout(0.15));
    layers.push_back(LayerSpec::dense(outputs));
}

}  // namespace

std::vector<LayerSpec> regressor_layers(Shape target, const TrunkOptions& opts) {
    auto layers = conv_trunk(opts);
    append_head(layers, target.size());
    layers.push_back(LayerSpec::reshape(target));
    return layers;
}

TrunkOptions default_regressor_options(eeg::InputKind input) {
    TrunkOptions opts;
    if (input == eeg::InputKind::psd) opts.pool_pad_to = std::pair<std::size_t, std::size_t>{17, 32};
    return opts;
}

std::vector<LayerSpec> classifier_layers(std::size_t n_classes, const TrunkOptions& opts) {
    if (n_classes < 2) throw InvalidInput("classifier needs at least two classes");
    auto layers = conv_trunk(opts);
    append_head(layers, n_classes);
    return layers;
}

Sequential<float> build_regressor(eeg::InputKind input, TargetKind target, std::uint64_t seed,
                                  std::optional<TrunkOptions> opts) {
    const auto [rows, cols] = eeg::input_shape(input);
    const TrunkOptions o = opts.value_or(default_regressor_options(input));
    Sequential<float> model({rows, cols, 1}, regressor_layers(target_shape(target), o));
    model.initialize(seed);
    return model;
}

Sequential<float> build_classifier(Shape input, std::size_t n_classes, std::uint64_t seed, TrunkOptions opts) {
    Sequential<float> model(input, classifier_layers(n_classes, opts));
    model.initialize(seed);
    return model;
}

// ---------------------------------------------------------------------------

template <typename T>
double mse_loss(const Tensor<T>& pred, const std::vector<T>& target, Tensor<T>* grad) {
    if (pred.data.size() != target.size()) throw InvalidInput("mse_loss: size mismatch");
    const double count = static_cast<double>(target.size());
    double sum = 0.0;
    if (grad) grad->resize(pred.n, pred.shape);
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double d = static_cast<double>(pred.data[i]) - static_cast<double>(target[i]);
        sum += d * d;
        if (grad) grad->data[i] = static_cast<T>(2.0 * d / count);
    }
    return sum / count;
}

template <typename T>
std::vector<double> softmax(const T* logits, std::size_t classes) {
    std::vector<double> p(classes);
    double mx = -INFINITY;
    for (std::size_t k = 0; k < classes; ++k) mx = std::max(mx, static_cast<double>(logits[k]));
    double z = 0.0;
    for (std::size_t k = 0; k < classes; ++k) z += p[k] = std::exp(static_cast<double>(logits[k]) - mx);
    for (auto& v : p) v /= z;
    return p;
}

template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, const std::vector<std::size_t>& labels, Tensor<T>* grad) {
    const std::size_t classes = logits.per_example();
    if (labels.size() != logits.n) throw InvalidInput("softmax_cross_entropy: label count mismatch");
    if (grad) grad->resize(logits.n, logits.shape);
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(logits.n);
    for (std::size_t i = 0; i < logits.n; ++i) {
        if (labels[i] >= classes) throw InvalidInput("softmax_cross_entropy: label out of range");
        const auto p = softmax(logits.example(i), classes);
        loss -= std::log(std::max(p[labels[i]], 1e-300));
        if (grad)
            for (std::size_t k = 0; k < classes; ++k)
                grad->example(i)[k] = static_cast<T>((p[k] - (k == labels[i] ? 1.0 : 0.0)) * inv_n);
    }
    return loss * inv_n;
}

template double mse_loss<float>(const Tensor<float>&, const std::vector<float>&, Tensor<float>*);
template double mse_loss<double>(const Tensor<double>&, const std::vector<double>&, Tensor<double>*);
template double softmax_cross_entropy<float>(const Tensor<float>&, const std::vector<std::size_t>&, Tensor<float>*);
template double softmax_cross_entropy<double>(const Tensor<double>&, const std::vector<std::size_t>&,
                                              Tensor<double>*);
template std::vector<double> softmax<float>(const float*, std::size_t);
template std::vector<double> softmax<double>(const double*, std::size_t);

}  // namespace cortical::nn
