#include "cortical/simd.hpp"

#include <cmath>

namespace cortical::simd::scalar {

template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc) {
    auto at = [&](std::size_t i, std::size_t p) { return ta == Trans::no ? a[i * lda + p] : a[p * lda + i]; };
    if (tb == Trans::no) {
        // i-p-j order keeps the inner loop on contiguous rows of B and C.
        for (std::size_t i = 0; i < m; ++i) {
            T* crow = c + i * ldc;
            for (std::size_t p = 0; p < k; ++p) {
                const T aip = at(i, p);
                const T* brow = b + p * ldb;
                for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
            }
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            T* crow = c + i * ldc;
            for (std::size_t j = 0; j < n; ++j) {
                const T* brow = b + j * ldb;
                T acc{};
                for (std::size_t p = 0; p < k; ++p) acc += at(i, p) * brow[p];
                crow[j] += acc;
            }
        }
    }
}

template <typename T>
void adam_update(T* param, const T* grad, T* m, T* v, std::size_t n, const AdamCoefficients& c) {
    const T b1 = static_cast<T>(c.beta1);
    const T b2 = static_cast<T>(c.beta2);
    const T step = static_cast<T>(c.lr / c.bias_correction1);
    const T inv_bc2 = static_cast<T>(1.0 / c.bias_correction2);
    const T eps = static_cast<T>(c.eps);
    for (std::size_t i = 0; i < n; ++i) {
        const T g = grad[i];
        m[i] = b1 * m[i] + (T(1) - b1) * g;
        v[i] = b2 * v[i] + (T(1) - b2) * g * g;
        param[i] -= step * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
    }
}

template void gemm<float>(Trans, Trans, std::size_t, std::size_t, std::size_t, const float*, std::size_t,
                          const float*, std::size_t, float*, std::size_t);
template void gemm<double>(Trans, Trans, std::size_t, std::size_t, std::size_t, const double*, std::size_t,
                           const double*, std::size_t, double*, std::size_t);
template void adam_update<float>(float*, const float*, float*, float*, std::size_t, const AdamCoefficients&);
template void adam_update<double>(double*, const double*, double*, double*, std::size_t,
                                  const AdamCoefficients&);

}  // namespace cortical::simd::scalar
