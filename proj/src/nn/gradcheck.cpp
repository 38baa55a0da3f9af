#include "cortical/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cortical/common.hpp"

namespace cortical::nn {

double relative_error(double analytic, double numeric, double floor) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

GradCheckResult gradient_check(const LayerSpec& spec, Shape input, std::size_t batch, std::uint64_t seed,
                               std::size_t max_per_tensor, double step) {
    auto layer = make_layer<double>(spec, input);
    layer->initialize(derive_seed(seed, 1));
    std::mt19937_64 rng(derive_seed(seed, 2));
    // Non-trivial affine parameters so their gradients are exercised away from identity.
    for (auto& p : layer->params())
        if (p.grad && layer->kind() == LayerKind::batchnorm)
            for (auto& v : *p.value) v = uniform(rng, 0.5, 1.5);
    for (auto& p : layer->params())
        if (p.grad && (layer->kind() == LayerKind::conv2d || layer->kind() == LayerKind::dense) &&
            p.name == "bias")
            for (auto& v : *p.value) v = uniform(rng, -0.5, 0.5);
    layer->set_step(derive_seed(seed, 3), 0);

    Tensor<double> x(batch, input);
    for (auto& v : x.data) v = uniform(rng, -1.0, 1.0);
    Tensor<double> r(batch, layer->output_shape());
    for (auto& v : r.data) v = uniform(rng, -1.0, 1.0);

    Tensor<double> y, dx;
    auto loss = [&](const Tensor<double>& in) {
        layer->forward(in, y, Mode::train);
        double s = 0.0;
        for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * r.data[i];
        return s;
    };

    loss(x);
    for (auto& p : layer->params())
        if (p.grad) std::fill(p.grad->begin(), p.grad->end(), 0.0);
    layer->backward(r, dx, true);

    GradCheckResult res;
    res.kind = layer->kind();
    auto probe = [&](std::vector<double>& values, const std::vector<double>& analytic, const Tensor<double>& at) {
        std::vector<std::size_t> idx(values.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        cortical::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(std::min(idx.size(), max_per_tensor));
        for (std::size_t i : idx) {
            const double orig = values[i];
            values[i] = orig + step;
            const double up = loss(at);
            values[i] = orig - step;
            const double down = loss(at);
            values[i] = orig;
            const double numeric = (up - down) / (2.0 * step);
            res.max_rel_error = std::max(res.max_rel_error, relative_error(analytic[i], numeric));
            ++res.checked;
        }
    };

    const std::vector<double> dx_analytic = dx.data;
    Tensor<double> xp = x;
    probe(xp.data, dx_analytic, xp);
    for (auto& p : layer->params()) {
        if (!p.grad) continue;
        const std::vector<double> g = *p.grad;
        probe(*p.value, g, x);
    }
    return res;
}

}  // namespace cortical::nn
