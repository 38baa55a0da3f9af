#include "cortical/simd.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace cortical::simd {
namespace {

Isa detect() noexcept {
    const char* env = std::getenv("CORTICAL_SIMD");
    if (env != nullptr && std::strcmp(env, "scalar") == 0) return Isa::scalar;
    return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() noexcept {
    static std::atomic<Isa> isa{detect()};
    return isa;
}

}  // namespace

bool cpu_has_avx2() noexcept {
#if defined(CORTICAL_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa active_isa() noexcept { return current().load(std::memory_order_relaxed); }

bool force_isa(Isa isa) noexcept {
    if (isa == Isa::avx2 && !cpu_has_avx2()) {
        current().store(Isa::scalar);
        return false;
    }
    current().store(isa);
    return true;
}

std::string_view isa_name(Isa isa) noexcept { return isa == Isa::avx2 ? "avx2" : "scalar"; }

#define CORTICAL_DISPATCH(fn, ...)                                  \
    do {                                                            \
        if (active_isa() == Isa::avx2) return avx2::fn(__VA_ARGS__); \
        return scalar::fn(__VA_ARGS__);                             \
    } while (0)

#ifndef CORTICAL_HAVE_AVX2_KERNELS
#undef CORTICAL_DISPATCH
#define CORTICAL_DISPATCH(fn, ...) return scalar::fn(__VA_ARGS__)
#endif

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
          const float* b, std::size_t ldb, float* c, std::size_t ldc) {
    CORTICAL_DISPATCH(gemm<float>, ta, tb, m, n, k, a, lda, b, ldb, c, ldc);
}

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc) {
    CORTICAL_DISPATCH(gemm<double>, ta, tb, m, n, k, a, lda, b, ldb, c, ldc);
}

void adam_update(float* param, const float* grad, float* m, float* v, std::size_t n,
                 const AdamCoefficients& c) {
    CORTICAL_DISPATCH(adam_update<float>, param, grad, m, v, n, c);
}

void adam_update(double* param, const double* grad, double* m, double* v, std::size_t n,
                 const AdamCoefficients& c) {
    CORTICAL_DISPATCH(adam_update<double>, param, grad, m, v, n, c);
}

}  // namespace cortical::simd
