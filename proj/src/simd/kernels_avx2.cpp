// AVX2 + FMA kernels. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after the dispatcher has confirmed CPU support.

#include "cortical/simd.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace cortical::simd::avx2 {
namespace {

template <typename T>
struct Vec;

template <>
struct Vec<float> {
    using reg = __m256;
    static constexpr std::size_t width = 8;
    static reg zero() { return _mm256_setzero_ps(); }
    static reg load(const float* p) { return _mm256_loadu_ps(p); }
    static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
    static reg broadcast(float x) { return _mm256_set1_ps(x); }
    static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
    static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
    static reg sub(reg a, reg b) { return _mm256_sub_ps(a, b); }
    static reg mul(reg a, reg b) { return _mm256_mul_ps(a, b); }
    static reg div(reg a, reg b) { return _mm256_div_ps(a, b); }
    static reg sqrt(reg a) { return _mm256_sqrt_ps(a); }
};

template <>
struct Vec<double> {
    using reg = __m256d;
    static constexpr std::size_t width = 4;
    static reg zero() { return _mm256_setzero_pd(); }
    static reg load(const double* p) { return _mm256_loadu_pd(p); }
    static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
    static reg broadcast(double x) { return _mm256_set1_pd(x); }
    static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
    static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
    static reg sub(reg a, reg b) { return _mm256_sub_pd(a, b); }
    static reg mul(reg a, reg b) { return _mm256_mul_pd(a, b); }
    static reg div(reg a, reg b) { return _mm256_div_pd(a, b); }
    static reg sqrt(reg a) { return _mm256_sqrt_pd(a); }
};

constexpr std::size_t kMR = 6;
constexpr std::size_t kKC = 256;
constexpr std::size_t kMC = 96;
constexpr std::size_t kNC = 2048;

template <typename T>
constexpr std::size_t kNR = 2 * Vec<T>::width;

// Packs op(A)[i0:i0+mc, p0:p0+kc] into row panels of kMR, p-major inside each
// panel, zero-padding the ragged last panel.
template <typename T>
void pack_a(Trans ta, const T* a, std::size_t lda, std::size_t i0, std::size_t mc, std::size_t p0,
            std::size_t kc, T* out) {
    for (std::size_t ib = 0; ib < mc; ib += kMR) {
        const std::size_t rows = std::min(kMR, mc - ib);
        for (std::size_t p = 0; p < kc; ++p) {
            for (std::size_t r = 0; r < kMR; ++r) {
                T val{};
                if (r < rows) {
                    const std::size_t i = i0 + ib + r;
                    const std::size_t q = p0 + p;
                    val = ta == Trans::no ? a[i * lda + q] : a[q * lda + i];
                }
                *out++ = val;
            }
        }
    }
}

// Packs op(B)[p0:p0+kc, j0:j0+nc] into column panels of kNR.
template <typename T>
void pack_b(Trans tb, const T* b, std::size_t ldb, std::size_t p0, std::size_t kc, std::size_t j0,
            std::size_t nc, T* out) {
    constexpr std::size_t nr = kNR<T>;
    for (std::size_t jb = 0; jb < nc; jb += nr) {
        const std::size_t cols = std::min(nr, nc - jb);
        for (std::size_t p = 0; p < kc; ++p) {
            const std::size_t q = p0 + p;
            if (tb == Trans::no) {
                const T* src = b + q * ldb + j0 + jb;
                std::size_t c = 0;
                for (; c < cols; ++c) out[c] = src[c];
                for (; c < nr; ++c) out[c] = T{};
            } else {
                std::size_t c = 0;
                for (; c < cols; ++c) out[c] = b[(j0 + jb + c) * ldb + q];
                for (; c < nr; ++c) out[c] = T{};
            }
            out += nr;
        }
    }
}

template <typename T>
void micro_kernel(std::size_t kc, const T* pa, const T* pb, T* c, std::size_t ldc, std::size_t rows,
                  std::size_t cols) {
    using V = Vec<T>;
    constexpr std::size_t w = V::width;
    constexpr std::size_t nr = kNR<T>;
    typename V::reg acc[kMR][2];
    for (auto& r : acc) r[0] = r[1] = V::zero();

    for (std::size_t p = 0; p < kc; ++p) {
        const auto b0 = V::load(pb);
        const auto b1 = V::load(pb + w);
        for (std::size_t r = 0; r < kMR; ++r) {
            const auto ar = V::broadcast(pa[r]);
            acc[r][0] = V::fmadd(ar, b0, acc[r][0]);
            acc[r][1] = V::fmadd(ar, b1, acc[r][1]);
        }
        pa += kMR;
        pb += nr;
    }

    if (rows == kMR && cols == nr) {
        for (std::size_t r = 0; r < kMR; ++r) {
            T* crow = c + r * ldc;
            V::store(crow, V::add(V::load(crow), acc[r][0]));
            V::store(crow + w, V::add(V::load(crow + w), acc[r][1]));
        }
        return;
    }
    alignas(32) T tile[kMR][nr];
    for (std::size_t r = 0; r < kMR; ++r) {
        V::store(tile[r], acc[r][0]);
        V::store(tile[r] + w, acc[r][1]);
    }
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] += tile[r][j];
}

}  // namespace

template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
          const T* b, std::size_t ldb, T* c, std::size_t ldc) {
    if (m == 0 || n == 0 || k == 0) return;
    constexpr std::size_t nr = kNR<T>;
    thread_local std::vector<T> abuf;
    thread_local std::vector<T> bbuf;

    for (std::size_t j0 = 0; j0 < n; j0 += kNC) {
        const std::size_t nc = std::min(kNC, n - j0);
        const std::size_t nc_pad = (nc + nr - 1) / nr * nr;
        for (std::size_t p0 = 0; p0 < k; p0 += kKC) {
            const std::size_t kc = std::min(kKC, k - p0);
            bbuf.resize(kc * nc_pad);
            pack_b(tb, b, ldb, p0, kc, j0, nc, bbuf.data());
            for (std::size_t i0 = 0; i0 < m; i0 += kMC) {
                const std::size_t mc = std::min(kMC, m - i0);
                const std::size_t mc_pad = (mc + kMR - 1) / kMR * kMR;
                abuf.resize(mc_pad * kc);
                pack_a(ta, a, lda, i0, mc, p0, kc, abuf.data());
                for (std::size_t jb = 0; jb < nc; jb += nr) {
                    const std::size_t cols = std::min(nr, nc - jb);
                    const T* pb = bbuf.data() + jb * kc;
                    for (std::size_t ib = 0; ib < mc; ib += kMR) {
                        const std::size_t rows = std::min(kMR, mc - ib);
                        micro_kernel<T>(kc, abuf.data() + ib * kc, pb, c + (i0 + ib) * ldc + j0 + jb, ldc,
                                        rows, cols);
                    }
                }
            }
        }
    }
}

template <typename T>
void adam_update(T* param, const T* grad, T* m, T* v, std::size_t n, const AdamCoefficients& co) {
    using V = Vec<T>;
    constexpr std::size_t w = V::width;
    const T b1 = static_cast<T>(co.beta1);
    const T b2 = static_cast<T>(co.beta2);
    const T step = static_cast<T>(co.lr / co.bias_correction1);
    const T inv_bc2 = static_cast<T>(1.0 / co.bias_correction2);
    const T eps = static_cast<T>(co.eps);

    const auto vb1 = V::broadcast(b1), vb1c = V::broadcast(T(1) - b1);
    const auto vb2 = V::broadcast(b2), vb2c = V::broadcast(T(1) - b2);
    const auto vstep = V::broadcast(step), vinv = V::broadcast(inv_bc2), veps = V::broadcast(eps);
    std::size_t i = 0;
    for (; i + w <= n; i += w) {
        const auto g = V::load(grad + i);
        const auto mi = V::add(V::mul(vb1, V::load(m + i)), V::mul(vb1c, g));
        const auto vi = V::add(V::mul(vb2, V::load(v + i)), V::mul(V::mul(vb2c, g), g));
        V::store(m + i, mi);
        V::store(v + i, vi);
        const auto denom = V::add(V::sqrt(V::mul(vi, vinv)), veps);
        const auto upd = V::div(V::mul(vstep, mi), denom);
        V::store(param + i, V::sub(V::load(param + i), upd));
    }
    for (; i < n; ++i) {
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

}  // namespace cortical::simd::avx2
