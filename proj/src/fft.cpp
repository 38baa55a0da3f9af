#include "fft.hpp"

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>
#include <vector>

namespace cortical::detail {
namespace {

struct PlanPair {
    fftw_plan forward = nullptr;
    fftw_plan inverse = nullptr;
    ~PlanPair() {
        if (forward) fftw_destroy_plan(forward);
        if (inverse) fftw_destroy_plan(inverse);
    }
};

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

const PlanPair& plans_for(std::size_t n) {
    static std::map<std::size_t, std::unique_ptr<PlanPair>> cache;
    std::lock_guard lock(planner_mutex());
    auto& slot = cache[n];
    if (!slot) {
        // FFTW_ESTIMATE keeps plan selection (and therefore rounding) independent of timing.
        const int ni = static_cast<int>(n);
        std::vector<double> r(n);
        std::vector<fftw_complex> c(n / 2 + 1);
        slot = std::make_unique<PlanPair>();
        slot->forward = fftw_plan_dft_r2c_1d(ni, r.data(), c.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
        slot->inverse = fftw_plan_dft_c2r_1d(ni, c.data(), r.data(),
                                             FFTW_ESTIMATE | FFTW_UNALIGNED | FFTW_DESTROY_INPUT);
    }
    return *slot;
}

}  // namespace

void rfft(const double* in, std::complex<double>* out, std::size_t n) {
    const auto& p = plans_for(n);
    std::vector<double> scratch(in, in + n);  // r2c may not preserve input for all sizes
    fftw_execute_dft_r2c(p.forward, scratch.data(), reinterpret_cast<fftw_complex*>(out));
}

void irfft(const std::complex<double>* in, double* out, std::size_t n) {
    const auto& p = plans_for(n);
    std::vector<std::complex<double>> scratch(in, in + n / 2 + 1);
    fftw_execute_dft_c2r(p.inverse, reinterpret_cast<fftw_complex*>(scratch.data()), out);
}

}  // namespace cortical::detail
