#pragma once

// Thin RAII wrapper around FFTW's real-input transforms. Plans are created
// once per size under a lock and executed through the thread-safe new-array
// interface, so callers never touch FFTW state directly.

#include <complex>
#include <cstddef>

namespace cortical::detail {

/// out[0..n/2] = DFT(in[0..n-1]).
void rfft(const double* in, std::complex<double>* out, std::size_t n);

/// out[0..n-1] = unnormalised inverse of a Hermitian half-spectrum (n/2+1 values).
/// The input buffer is not modified.
void irfft(const std::complex<double>* in, double* out, std::size_t n);

}  // namespace cortical::detail
