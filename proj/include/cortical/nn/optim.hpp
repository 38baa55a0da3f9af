#pragma once

#include <cstdint>
#include <vector>

#include "cortical/nn/layers.hpp"

namespace cortical::nn {

struct AdamConfig {
    double lr = 0.0015;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam. Moment buffers are created lazily on the first step
/// and mirror the trainable parameters in order.
template <typename T>
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    /// Throws DivergenceError (epoch -1) if any gradient is NaN or infinite;
    /// parameters are left untouched in that case.
    void step(const std::vector<ParamRef<T>>& params);

    std::uint64_t steps() const { return t_; }
    const AdamConfig& config() const { return cfg_; }
    const std::vector<std::vector<T>>& first_moments() const { return m_; }
    const std::vector<std::vector<T>>& second_moments() const { return v_; }

private:
    AdamConfig cfg_;
    std::uint64_t t_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

}  // namespace cortical::nn
