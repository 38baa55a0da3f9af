#include "cortical/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "cortical/common.hpp"
#include "cortical/simd.hpp"

namespace cortical::nn {

using simd::Trans;

const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv2d: return "Conv2D";
        case LayerKind::batchnorm: return "BatchNorm";
        case LayerKind::relu: return "ReLU";
        case LayerKind::maxpool: return "MaxPool2D";
        case LayerKind::dropout: return "Dropout";
        case LayerKind::flatten: return "Flatten";
        case LayerKind::dense: return "Dense";
        case LayerKind::reshape: return "Reshape";
    }
    return "?";
}

LayerSpec LayerSpec::conv(std::size_t filters, std::size_t kernel, std::size_t stride) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.filters = filters;
    s.kernel = kernel;
    s.stride = stride;
    return s;
}
LayerSpec LayerSpec::batchnorm() { return {.kind = LayerKind::batchnorm}; }
LayerSpec LayerSpec::relu() { return {.kind = LayerKind::relu}; }
LayerSpec LayerSpec::maxpool(std::optional<std::pair<std::size_t, std::size_t>> pad_to) {
    LayerSpec s;
    s.kind = LayerKind::maxpool;
    s.pad_to = pad_to;
    return s;
}
LayerSpec LayerSpec::dropout(double rate) {
    LayerSpec s;
    s.kind = LayerKind::dropout;
    s.rate = rate;
    return s;
}
LayerSpec LayerSpec::flatten() { return {.kind = LayerKind::flatten}; }
LayerSpec LayerSpec::dense(std::size_t units) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.units = units;
    return s;
}
LayerSpec LayerSpec::reshape(Shape target) {
    LayerSpec s;
    s.kind = LayerKind::reshape;
    s.target = target;
    return s;
}

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, Shape input) {
    switch (spec.kind) {
        case LayerKind::conv2d: return std::make_unique<Conv2D<T>>(input, spec.filters, spec.kernel, spec.stride);
        case LayerKind::batchnorm: return std::make_unique<BatchNorm<T>>(input);
        case LayerKind::relu: return std::make_unique<ReLU<T>>(input);
        case LayerKind::maxpool: return std::make_unique<MaxPool2x2<T>>(input, spec.pad_to);
        case LayerKind::dropout: return std::make_unique<Dropout<T>>(input, spec.rate);
        case LayerKind::flatten: return std::make_unique<Flatten<T>>(input);
        case LayerKind::dense: return std::make_unique<Dense<T>>(input, spec.units);
        case LayerKind::reshape: return std::make_unique<Reshape<T>>(input, spec.target);
    }
    throw InvalidInput("unknown layer kind");
}

double he_uniform_limit(std::size_t fan_in) {
    if (fan_in < 1) throw InvalidInput("he_uniform: fan_in must be >= 1");
    return std::sqrt(6.0 / static_cast<double>(fan_in));
}

template <typename T>
std::vector<T> he_uniform(std::size_t count, std::size_t fan_in, std::uint64_t seed) {
    const double limit = he_uniform_limit(fan_in);
    std::vector<T> out(count);
    const std::uint64_t base = mix_seed(seed);
    for (std::size_t i = 0; i < count; ++i) {
        const double u = static_cast<double>(mix_seed(base + i) >> 11) * 0x1.0p-53;
        out[i] = static_cast<T>((2.0 * u - 1.0) * limit);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Conv2D

template <typename T>
Conv2D<T>::Conv2D(Shape in, std::size_t filters, std::size_t kernel, std::size_t stride)
    : Layer<T>(in), filters_(filters), kernel_(kernel), stride_(stride) {
    if (filters == 0 || kernel == 0 || stride == 0) throw InvalidInput("Conv2D: zero-sized configuration");
    out_ = {(in.h + stride - 1) / stride, (in.w + stride - 1) / stride, filters};
    const auto total = [&](std::size_t len, std::size_t out) {
        const std::size_t need = (out - 1) * stride + kernel;
        return need > len ? need - len : 0;
    };
    pad_top_ = total(in.h, out_.h) / 2;
    pad_left_ = total(in.w, out_.w) / 2;
    const std::size_t k = kernel * kernel * in.c;
    weight.assign(k * filters, T{});
    weight_grad.assign(k * filters, T{});
    bias.assign(filters, T{});
    bias_grad.assign(filters, T{});
}

template <typename T>
void Conv2D<T>::initialize(std::uint64_t seed) {
    const std::size_t fan_in = kernel_ * kernel_ * this->in_.c;
    weight = he_uniform<T>(weight.size(), fan_in, seed);
    std::fill(bias.begin(), bias.end(), T{});
}

template <typename T>
std::vector<ParamRef<T>> Conv2D<T>::params() {
    return {{"kernel", &weight, &weight_grad}, {"bias", &bias, &bias_grad}};
}

template <typename T>
void Conv2D<T>::im2col(const T* x, T* cols) const {
    const Shape in = this->in_;
    const std::size_t cin = in.c;
    const std::size_t kk = kernel_ * kernel_ * cin;
    for (std::size_t oy = 0; oy < out_.h; ++oy) {
        for (std::size_t ox = 0; ox < out_.w; ++ox) {
            T* row = cols + (oy * out_.w + ox) * kk;
            for (std::size_t ky = 0; ky < kernel_; ++ky) {
                const long iy = static_cast<long>(oy * stride_ + ky) - static_cast<long>(pad_top_);
                for (std::size_t kx = 0; kx < kernel_; ++kx) {
                    const long ix = static_cast<long>(ox * stride_ + kx) - static_cast<long>(pad_left_);
                    T* dst = row + (ky * kernel_ + kx) * cin;
                    if (iy < 0 || ix < 0 || iy >= static_cast<long>(in.h) || ix >= static_cast<long>(in.w)) {
                        std::fill_n(dst, cin, T{});
                    } else {
                        std::copy_n(x + (static_cast<std::size_t>(iy) * in.w + static_cast<std::size_t>(ix)) * cin, cin, dst);
                    }
                }
            }
        }
    }
}

template <typename T>
void Conv2D<T>::col2im(const T* cols, T* dx) const {
    const Shape in = this->in_;
    const std::size_t cin = in.c;
    const std::size_t kk = kernel_ * kernel_ * cin;
    for (std::size_t oy = 0; oy < out_.h; ++oy) {
        for (std::size_t ox = 0; ox < out_.w; ++ox) {
            const T* row = cols + (oy * out_.w + ox) * kk;
            for (std::size_t ky = 0; ky < kernel_; ++ky) {
                const long iy = static_cast<long>(oy * stride_ + ky) - static_cast<long>(pad_top_);
                if (iy < 0 || iy >= static_cast<long>(in.h)) continue;
                for (std::size_t kx = 0; kx < kernel_; ++kx) {
                    const long ix = static_cast<long>(ox * stride_ + kx) - static_cast<long>(pad_left_);
                    if (ix < 0 || ix >= static_cast<long>(in.w)) continue;
                    const T* src = row + (ky * kernel_ + kx) * cin;
                    T* dst = dx + (static_cast<std::size_t>(iy) * in.w + static_cast<std::size_t>(ix)) * cin;
                    for (std::size_t c = 0; c < cin; ++c) dst[c] += src[c];
                }
            }
        }
    }
}

template <typename T>
void Conv2D<T>::forward(const Tensor<T>& x, Tensor<T>& y, Mode mode) {
    if (x.shape != this->in_) throw InvalidInput("Conv2D: input shape " + x.shape.str() + " != " + this->in_.str());
    const std::size_t p = out_.h * out_.w;
    const std::size_t kk = kernel_ * kernel_ * this->in_.c;
    y.resize(x.n, out_);
    if (mode == Mode::train) x_ = x;
    cols_.resize(p * kk);
    for (std::size_t n = 0; n < x.n; ++n) {
        im2col(x.example(n), cols_.data());
        T* yn = y.example(n);
        for (std::size_t i = 0; i < p; ++i) std::copy(bias.begin(), bias.end(), yn + i * filters_);
        simd::gemm(Trans::no, Trans::no, p, filters_, kk, cols_.data(), kk, weight.data(), filters_, yn, filters_);
    }
}

template <typename T>
void Conv2D<T>::backward(const Tensor<T>& dy, Tensor<T>& dx, bool need_dx) {
    if (x_.n != dy.n) throw InvalidInput("Conv2D: backward without matching train-mode forward");
    const std::size_t p = out_.h * out_.w;
    const std::size_t kk = kernel_ * kernel_ * this->in_.c;
    cols_.resize(p * kk);
    if (need_dx) {
        dx.resize(dy.n, this->in_);
        dcols_.resize(p * kk);
    }
    for (std::size_t n = 0; n < dy.n; ++n) {
        const T* dyn = dy.example(n);
        im2col(x_.example(n), cols_.data());
        simd::gemm(Trans::yes, Trans::no, kk, filters_, p, cols_.data(), kk, dyn, filters_, weight_grad.data(),
                   filters_);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t f = 0; f < filters_; ++f) bias_grad[f] += dyn[i * filters_ + f];
        if (need_dx) {
            std::fill(dcols_.begin(), dcols_.end(), T{});
            simd::gemm(Trans::no, Trans::yes, p, kk, filters_, dyn, filters_, weight.data(), filters_,
                       dcols_.data(), kk);
            col2im(dcols_.data(), dx.example(n));
        }
    }
}

// ---------------------------------------------------------------------------
// BatchNorm

template <typename T>
BatchNorm<T>::BatchNorm(Shape in) : Layer<T>(in) {
    const std::size_t c = in.c;
    gamma.assign(c, T(1));
    beta.assign(c, T(0));
    running_mean.assign(c, T(0));
    running_var.assign(c, T(1));
    gamma_grad.assign(c, T(0));
    beta_grad.assign(c, T(0));
}

template <typename T>
void BatchNorm<T>::initialize(std::uint64_t) {
    std::fill(gamma.begin(), gamma.end(), T(1));
    std::fill(beta.begin(), beta.end(), T(0));
    std::fill(running_mean.begin(), running_mean.end(), T(0));
    std::fill(running_var.begin(), running_var.end(), T(1));
}

template <typename T>
std::vector<ParamRef<T>> BatchNorm<T>::params() {
    return {{"gamma", &gamma, &gamma_grad},
            {"beta", &beta, &beta_grad},
            {"moving_mean", &running_mean, nullptr},
            {"moving_variance", &running_var, nullptr}};
}

template <typename T>
void BatchNorm<T>::forward(const Tensor<T>& x, Tensor<T>& y, Mode mode) {
    if (x.shape != this->in_) throw InvalidInput("BatchNorm: input shape mismatch");
    const std::size_t ch = this->in_.c;
    const std::size_t rows = x.n * this->in_.h * this->in_.w;
    mode_ = mode;
    count_ = rows;
    y.resize(x.n, this->in_);
    xhat_.resize(x.data.size());
    inv_std_.assign(ch, 0.0);

    std::vector<double> mean(ch, 0.0), var(ch, 0.0);
    if (mode == Mode::train) {
        if (x.n < 2) throw InvalidInput("BatchNorm: train mode needs a batch of at least 2");
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < ch; ++c) mean[c] += static_cast<double>(x.data[r * ch + c]);
        for (auto& m : mean) m /= static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < ch; ++c) {
                const double d = static_cast<double>(x.data[r * ch + c]) - mean[c];
                var[c] += d * d;
            }
        for (auto& v : var) v /= static_cast<double>(rows);
        for (std::size_t c = 0; c < ch; ++c) {
            running_mean[c] = static_cast<T>(kMomentum * running_mean[c] + (1.0 - kMomentum) * mean[c]);
            running_var[c] = static_cast<T>(kMomentum * running_var[c] + (1.0 - kMomentum) * var[c]);
        }
    } else {
        for (std::size_t c = 0; c < ch; ++c) {
            mean[c] = running_mean[c];
            var[c] = running_var[c];
        }
    }
    for (std::size_t c = 0; c < ch; ++c) inv_std_[c] = 1.0 / std::sqrt(var[c] + kEpsilon);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t i = r * ch + c;
            const double xh = (static_cast<double>(x.data[i]) - mean[c]) * inv_std_[c];
            xhat_[i] = static_cast<T>(xh);
            y.data[i] = static_cast<T>(gamma[c] * xh + beta[c]);
        }
}

template <typename T>
void BatchNorm<T>::backward(const Tensor<T>& dy, Tensor<T>& dx, bool need_dx) {
    const std::size_t ch = this->in_.c;
    const std::size_t rows = count_;
    if (dy.data.size() != rows * ch) throw InvalidInput("BatchNorm: backward shape mismatch");
    std::vector<double> sum_dy(ch, 0.0), sum_dy_xhat(ch, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t i = r * ch + c;
            sum_dy[c] += dy.data[i];
            sum_dy_xhat[c] += static_cast<double>(dy.data[i]) * xhat_[i];
        }
    for (std::size_t c = 0; c < ch; ++c) {
        gamma_grad[c] += static_cast<T>(sum_dy_xhat[c]);
        beta_grad[c] += static_cast<T>(sum_dy[c]);
    }
    if (!need_dx) return;
    dx.resize(dy.n, this->in_);
    const double m = static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t i = r * ch + c;
            const double g = static_cast<double>(gamma[c]) * inv_std_[c];
            if (mode_ == Mode::train)
                dx.data[i] = static_cast<T>(g / m * (m * dy.data[i] - sum_dy[c] - xhat_[i] * sum_dy_xhat[c]));
            else
                dx.data[i] = static_cast<T>(g * dy.data[i]);
        }
}

// ---------------------------------------------------------------------------
// ReLU

template <typename T>
void ReLU<T>::forward(const Tensor<T>& x, Tensor<T>& y, Mode) {
    y.resize(x.n, x.shape);
    active_.resize(x.data.size());
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        active_[i] = x.data[i] > T(0);
        y.data[i] = active_[i] ? x.data[i] : T(0);
    }
}

template <typename T>
void ReLU<T>::backward(const Tensor<T>& dy, Tensor<T>& dx, bool need_dx) {
    if (!need_dx) return;
    dx.resize(dy.n, dy.shape);
    for (std::size_t i = 0; i < dy.data.size(); ++i) dx.data[i] = active_[i] ? dy.data[i] : T(0);
}

// ---------------------------------------------------------------------------
// MaxPool2x2

template <typename T>
MaxPool2x2<T>::MaxPool2x2(Shape in, std::optional<std::pair<std::size_t, std::size_t>> pad_to)
    : Layer<T>(in), pad_to_(pad_to) {
    out_ = {(in.h + 1) / 2, (in.w + 1) / 2, in.c};
    if (pad_to) {
        if (pad_to->first < out_.h || pad_to->second < out_.w)
            throw InvalidInput("MaxPool2D: pad_to " + std::to_string(pad_to->first) + "x" +
                               std::to_string(pad_to->second) + " is smaller than the natural output " +
                               std::to_string(out_.h) + "x" + std::to_string(out_.w));
        out_.h = pad_to->first;
        out_.w = pad_to->second;
    }
}

template <typename T>
void MaxPool2x2<T>::forward(const Tensor<T>& x, Tensor<T>& y, Mode) {
    if (x.shape != this->in_) throw InvalidInput("MaxPool2D: input shape mismatch");
    const Shape in = this->in_;
    y.resize(x.n, out_);
    argmax_.resize(y.data.size());
    for (std::size_t n = 0; n < x.n; ++n) {
        const T* xn = x.example(n);
        T* yn = y.example(n);
        std::uint32_t* an = argmax_.data() + n * out_.size();
        for (std::size_t oy = 0; oy < out_.h; ++oy) {
            // Rows/cols beyond the input replicate the last one (edge padding).
            const std::size_t r0 = std::min(2 * oy, in.h - 1), r1 = std::min(2 * oy + 1, in.h - 1);
            for (std::size_t ox = 0; ox < out_.w; ++ox) {
                const std::size_t c0 = std::min(2 * ox, in.w - 1), c1 = std::min(2 * ox + 1, in.w - 1);
                const std::size_t cand[4] = {(r0 * in.w + c0) * in.c, (r0 * in.w + c1) * in.c,
                                             (r1 * in.w + c0) * in.c, (r1 * in.w + c1) * in.c};
                for (std::size_t c = 0; c < in.c; ++c) {
                    std::size_t best = cand[0] + c;
                    for (int k = 1; k < 4; ++k)
                        if (xn[cand[k] + c] > xn[best]) best = cand[k] + c;
                    const std::size_t o = (oy * out_.w + ox) * in.c + c;
                    yn[o] = xn[best];
                    an[o] = static_cast<std::uint32_t>(best);
                }
            }
        }
    }
}

template <typename T>
void MaxPool2x2<T>::backward(const Tensor<T>& dy, Tensor<T>& dx, bool need_dx) {
    if (!need_dx) return;
    dx.resize(dy.n, this->in_);
    for (std::size_t n = 0; n < dy.n; ++n) {
        const T* dyn = dy.example(n);
        T* dxn = dx.example(n);
        const std::uint32_t* an = argmax_.data() + n * out_.size();
        for (std::size_t o = 0; o < out_.size(); ++o) dxn[an[o]] += dyn[o];
    }
}

// ---------------------------------------------------------------------------
// Dropout

template <typename T>
Dropout<T>::Dropout(Shape in, double rate) : Layer<T>(in), rate_(rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw InvalidInput("Dropout: rate must be in [0, 1)");
}

template <typename T>
void Dropout<T>::set_step(std::uint64_t seed, std::uint64_t step) {
    stream_ = derive_seed(seed, step);
}

template <typename T>
void Dropout<T>::forward(const Tensor<T>& x, Tensor<T>& y, Mode mode) {
    mode_ = mode;
    y = x;
    if (mode == Mode::eval || rate_ == 0.0) return;
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate_));
    mask_.resize(x.data.size());
    const std::uint64_t base = mix_seed(stream_);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double u = static_cast<double>(mix_seed(base + i) >> 11) * 0x1.0p-53;
        mask_[i] = u < rate_ ? T(0) : keep_scale;
        y.data[i] *= mask_[i];
    }
}

template <typename T>
void Dropout<T>::backward(const Tensor<T>& dy, Tensor<T>& dx, bool need_dx) {
    if (!need_dx) return;
    dx = dy;
    if (mode_ == Mode::eval || rate_ == 0.0) return;
    for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] *= mask_[i];
}

// ---------------------------------------------------------------------------
// Flatten / Reshape

template <typename T>
void Flatten<T>::forward(const Tensor<T>& x, Tensor<T>& y, Mode) {
    y = x;
    y.shape = output_shape();
}

template <typename T>
void Flatten<T>::backward(const Tensor<T>& dy, Tensor<T>& dx, bool need_dx) {
    if (!need_dx) return;
    dx = dy;
    dx.shape = this->in_;
}

template <typename T>
Reshape<T>::Reshape(Shape in, Shape target) : Layer<T>(in), target_(target) {
    if (in.size() != target.size())
        throw InvalidInput("Reshape: " + in.str() + " cannot be reshaped to " + target.str());
}

template <typename T>
void Reshape<T>::forward(const Tensor<T>& x, Tensor<T>& y, Mode) {
    y = x;
    y.shape = target_;
}

template <typename T>
void Reshape<T>::backward(const Tensor<T>& dy, Tensor<T>& dx, bool need_dx) {
    if (!need_dx) return;
    dx = dy;
    dx.shape = this->in_;
}

// ---------------------------------------------------------------------------
// Dense

template <typename T>
Dense<T>::Dense(Shape in, std::size_t units) : Layer<T>(in), units_(units) {
    if (units == 0) throw InvalidInput("Dense: zero units");
    weight.assign(in.size() * units, T{});
    weight_grad.assign(in.size() * units, T{});
    bias.assign(units, T{});
    bias_grad.assign(units, T{});
}

template <typename T>
void Dense<T>::initialize(std::uint64_t seed) {
    weight = he_uniform<T>(weight.size(), this->in_.size(), seed);
    std::fill(bias.begin(), bias.end(), T{});
}

template <typename T>
std::vector<ParamRef<T>> Dense<T>::params() {
    return {{"kernel", &weight, &weight_grad}, {"bias", &bias, &bias_grad}};
}

template <typename T>
void Dense<T>::forward(const Tensor<T>& x, Tensor<T>& y, Mode mode) {
    const std::size_t in = this->in_.size();
    if (x.per_example() != in) throw InvalidInput("Dense: input width mismatch");
    y.resize(x.n, output_shape());
    for (std::size_t n = 0; n < x.n; ++n) std::copy(bias.begin(), bias.end(), y.example(n));
    simd::gemm(Trans::no, Trans::no, x.n, units_, in, x.data.data(), in, weight.data(), units_, y.data.data(), units_);
    if (mode == Mode::train) x_ = x;
}

template <typename T>
void Dense<T>::backward(const Tensor<T>& dy, Tensor<T>& dx, bool need_dx) {
    const std::size_t in = this->in_.size();
    if (x_.n != dy.n) throw InvalidInput("Dense: backward without matching train-mode forward");
    simd::gemm(Trans::yes, Trans::no, in, units_, dy.n, x_.data.data(), in, dy.data.data(), units_,
               weight_grad.data(), units_);
    for (std::size_t n = 0; n < dy.n; ++n)
        for (std::size_t u = 0; u < units_; ++u) bias_grad[u] += dy.example(n)[u];
    if (!need_dx) return;
    dx.resize(dy.n, this->in_);
    simd::gemm(Trans::no, Trans::yes, dy.n, in, units_, dy.data.data(), units_, weight.data(), units_,
               dx.data.data(), in);
}

// ---------------------------------------------------------------------------

#define CORTICAL_INSTANTIATE(T)                                                  \
    template class Conv2D<T>;                                                    \
    template class BatchNorm<T>;                                                 \
    template class ReLU<T>;                                                      \
    template class MaxPool2x2<T>;                                                \
    template class Dropout<T>;                                                   \
    template class Flatten<T>;                                                   \
    template class Dense<T>;                                                     \
    template class Reshape<T>;                                                   \
    template std::unique_ptr<Layer<T>> make_layer<T>(const LayerSpec&, Shape);   \
    template std::vector<T> he_uniform<T>(std::size_t, std::size_t, std::uint64_t);

CORTICAL_INSTANTIATE(float)
CORTICAL_INSTANTIATE(double)

}  // namespace cortical::nn
