#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"

#include "cortical/simd.hpp"

using namespace cortical;

namespace {

template <typename T>
std::vector<T> as(const std::vector<double>& v) {
    return {v.begin(), v.end()};
}

template <typename T>
void check_gemm_shapes(double tol) {
    const std::size_t dims[][3] = {{1, 1, 1}, {5, 7, 3}, {6, 16, 8}, {13, 33, 70}, {97, 65, 300}, {7, 2100, 9}};
    int seed = 1;
    for (const auto& d : dims)
        for (int ta = 0; ta < 2; ++ta)
            for (int tb = 0; tb < 2; ++tb) {
                const std::size_t m = d[0], n = d[1], k = d[2];
                const auto a = as<T>(oracle::random_vector(m * k, seed++));
                const auto b = as<T>(oracle::random_vector(k * n, seed++));
                const auto c0 = as<T>(oracle::random_vector(m * n, seed++));
                const auto ref = oracle::matmul(ta, tb, m, n, k, a, b);
                const auto t_a = ta ? simd::Trans::yes : simd::Trans::no;
                const auto t_b = tb ? simd::Trans::yes : simd::Trans::no;
                const std::size_t lda = ta ? m : k, ldb = tb ? k : n;

                auto cs = c0;
                simd::scalar::gemm(t_a, t_b, m, n, k, a.data(), lda, b.data(), ldb, cs.data(), n);
#ifdef CORTICAL_HAVE_AVX2_KERNELS
                auto cv = c0;
                if (simd::cpu_has_avx2())
                    simd::avx2::gemm(t_a, t_b, m, n, k, a.data(), lda, b.data(), ldb, cv.data(), n);
                else
                    cv = cs;
#endif
                for (std::size_t i = 0; i < m * n; ++i) {
                    const double want = ref[i] + static_cast<double>(c0[i]);
                    const double scale = 1.0 + std::sqrt(static_cast<double>(k));
                    REQUIRE(std::abs(cs[i] - want) <= tol * scale);
#ifdef CORTICAL_HAVE_AVX2_KERNELS
                    REQUIRE(std::abs(cv[i] - want) <= tol * scale);
                    REQUIRE(std::abs(cv[i] - cs[i]) <= tol * scale);
#endif
                }
            }
}

}  // namespace

TEST_CASE("gemm matches a naive triple loop for all transpose combinations") {
    check_gemm_shapes<double>(1e-12);
    check_gemm_shapes<float>(1e-5);
}

TEST_CASE("gemm honours leading dimensions larger than the logical width") {
    const std::size_t m = 9, n = 11, k = 5, lda = 8, ldb = 14, ldc = 13;
    const auto a = as<float>(oracle::random_vector(m * lda, 3));
    const auto b = as<float>(oracle::random_vector(k * ldb, 4));
    std::vector<float> c(m * ldc, 7.0f);
    simd::gemm(simd::Trans::no, simd::Trans::no, m, n, k, a.data(), lda, b.data(), ldb, c.data(), ldc);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < ldc; ++j) {
            if (j >= n) {
                CHECK(c[i * ldc + j] == 7.0f);
                continue;
            }
            double s = 7.0;
            for (std::size_t p = 0; p < k; ++p) s += double(a[i * lda + p]) * double(b[p * ldb + j]);
            CHECK(std::abs(c[i * ldc + j] - s) < 1e-5);
        }
}

TEST_CASE("adam kernels agree between scalar and vector paths") {
    const simd::AdamCoefficients c{0.0015, 0.9, 0.999, 1e-8, 1 - 0.9 * 0.9, 1 - 0.999 * 0.999};
    for (std::size_t n : {1u, 7u, 8u, 31u, 1000u}) {
        auto p = as<float>(oracle::random_vector(n, 10 + n));
        const auto g = as<float>(oracle::random_vector(n, 20 + n));
        auto m = as<float>(oracle::random_vector(n, 30 + n, -0.1, 0.1));
        auto v = as<float>(oracle::random_vector(n, 40 + n, 0.0, 0.1));
        auto p2 = p, m2 = m, v2 = v;
        simd::scalar::adam_update(p.data(), g.data(), m.data(), v.data(), n, c);
#ifdef CORTICAL_HAVE_AVX2_KERNELS
        if (simd::cpu_has_avx2())
            simd::avx2::adam_update(p2.data(), g.data(), m2.data(), v2.data(), n, c);
        else
            simd::scalar::adam_update(p2.data(), g.data(), m2.data(), v2.data(), n, c);
#else
        simd::scalar::adam_update(p2.data(), g.data(), m2.data(), v2.data(), n, c);
#endif
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(p[i] == doctest::Approx(p2[i]).epsilon(1e-6));
            CHECK(m[i] == doctest::Approx(m2[i]).epsilon(1e-6));
            CHECK(v[i] == doctest::Approx(v2[i]).epsilon(1e-6));
        }
    }
}

TEST_CASE("dispatch can be forced to the scalar path and back") {
    const auto before = simd::active_isa();
    CHECK(simd::force_isa(simd::Isa::scalar));
    CHECK(simd::active_isa() == simd::Isa::scalar);
    if (simd::cpu_has_avx2()) {
        CHECK(simd::force_isa(simd::Isa::avx2));
        CHECK(simd::active_isa() == simd::Isa::avx2);
    }
    simd::force_isa(before);
    CHECK(simd::isa_name(simd::Isa::scalar) == "scalar");
}
