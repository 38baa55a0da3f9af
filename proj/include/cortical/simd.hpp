#pragma once

// Data-parallel inner loops used by the DSP and neural-network code.
//
// Every kernel has a portable scalar reference implementation and, on x86-64,
// an AVX2+FMA variant. The variant is chosen once at runtime from CPUID; the
// environment variable CORTICAL_SIMD=scalar forces the reference path. The two
// paths are not bit-identical (FMA contraction and summation order differ) but
// each is deterministic on its own.

#include <cstddef>
#include <string_view>

namespace cortical::simd {

enum class Isa { scalar, avx2 };

enum class Trans { no, yes };

/// ISA selected for this process.
Isa active_isa() noexcept;

/// Override the dispatch (tests and benchmarks). Requesting avx2 on a CPU
/// without it leaves the scalar path active and returns false.
bool force_isa(Isa isa) noexcept;

bool cpu_has_avx2() noexcept;

std::string_view isa_name(Isa isa) noexcept;

/// C[M x N] += op(A)[M x K] * op(B)[K x N], row-major with leading dimensions.
/// op(A) = A when ta == no (A is M x K), A^T when ta == yes (A is K x M).
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const float* a,
          std::size_t lda, const float* b, std::size_t ldb, float* c, std::size_t ldc);
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc);

/// In-place bias-corrected Adam update over a flat parameter block.
struct AdamCoefficients {
    double lr;
    double beta1;
    double beta2;
    double eps;
    double bias_correction1;  // 1 - beta1^t
    double bias_correction2;  // 1 - beta2^t
};
void adam_update(float* param, const float* grad, float* m, float* v, std::size_t n,
                 const AdamCoefficients& c);
void adam_update(double* param, const double* grad, double* m, double* v, std::size_t n,
                 const AdamCoefficients& c);

/// Reference kernels, always available; used directly by equivalence tests.
namespace scalar {
template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc);
template <typename T>
void adam_update(T* param, const T* grad, T* m, T* v, std::size_t n, const AdamCoefficients& c);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define CORTICAL_HAVE_AVX2_KERNELS 1
namespace avx2 {
template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc);
template <typename T>
void adam_update(T* param, const T* grad, T* m, T* v, std::size_t n, const AdamCoefficients& c);
}  // namespace avx2
#endif

}  // namespace cortical::simd
