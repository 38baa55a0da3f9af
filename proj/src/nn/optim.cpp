#include "cortical/nn/optim.hpp"

#include <cmath>

#include "cortical/common.hpp"
#include "cortical/simd.hpp"

namespace cortical::nn {

template <typename T>
void Adam<T>::step(const std::vector<ParamRef<T>>& params) {
    std::vector<const ParamRef<T>*> trainable;
    for (const auto& p : params)
        if (p.grad) trainable.push_back(&p);

    for (const auto* p : trainable)
        for (T g : *p->grad)
            if (!std::isfinite(static_cast<double>(g)))
                throw DivergenceError("non-finite gradient in " + p->name, -1);

    if (m_.empty()) {
        for (const auto* p : trainable) {
            m_.emplace_back(p->value->size(), T{});
            v_.emplace_back(p->value->size(), T{});
        }
    }
    if (m_.size() != trainable.size()) throw InvalidInput("Adam: parameter list changed between steps");

    ++t_;
    const double t = static_cast<double>(t_);
    const simd::AdamCoefficients c{cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.eps, 1.0 - std::pow(cfg_.beta1, t),
                                   1.0 - std::pow(cfg_.beta2, t)};
    for (std::size_t i = 0; i < trainable.size(); ++i) {
        auto& value = *trainable[i]->value;
        if (value.size() != m_[i].size()) throw InvalidInput("Adam: parameter shape changed");
        simd::adam_update(value.data(), trainable[i]->grad->data(), m_[i].data(), v_[i].data(), value.size(), c);
    }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace cortical::nn
