#pragma once

// Signal-processing kernels: STFT/ISTFT, mel filterbank, dB conversion,
// Griffin-Lim phase reconstruction and the single-window periodogram used for
// EEG power spectra. All functions are pure and safe to call concurrently.

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "cortical/common.hpp"

namespace cortical::dsp {

/// Analysis defaults for one-second 22.05 kHz audio: 44 frames x 1025 bins.
inline constexpr double kAudioRate = 22050.0;
inline constexpr std::size_t kFftSize = 2048;
inline constexpr std::size_t kHop = 512;
inline constexpr std::size_t kMelBands = 128;
inline constexpr double kDbEpsilon = 1e-10;

enum class WindowKind { hann };

struct WindowSpec {
    WindowKind kind = WindowKind::hann;
    std::size_t length = kFftSize;
};

/// Periodic Hann window of `length` samples.
std::vector<double> make_window(const WindowSpec& spec);

struct StftConfig {
    std::size_t fft_size = kFftSize;
    std::size_t hop = kHop;
    WindowSpec window{};
    /// Reflect-pad fft_size/2 samples at both edges so frame t is centred on sample t*hop.
    bool center = true;
    double sample_rate = kAudioRate;
};

struct ComplexSpectrogram {
    std::size_t frames = 0;
    std::size_t bins = 0;  // fft_size / 2 + 1
    std::vector<std::complex<double>> data;  // frames x bins, row-major
    std::size_t fft_size = 0;
    std::size_t hop = 0;
    double sample_rate = 0.0;
    bool center = true;
    /// Length of the analysed signal; istft trims to it.
    std::size_t signal_length = 0;

    std::complex<double>& at(std::size_t f, std::size_t b) { return data[f * bins + b]; }
    const std::complex<double>& at(std::size_t f, std::size_t b) const { return data[f * bins + b]; }

    MatrixD magnitude() const;
    MatrixD power() const;
};

ComplexSpectrogram stft(std::span<const double> signal, const StftConfig& cfg = {});

/// Overlap-add inverse with squared-window normalisation. `length` overrides
/// the stored signal_length when non-zero.
std::vector<double> istft(const ComplexSpectrogram& spec, const WindowSpec& window, std::size_t length = 0);

/// Number of centred frames produced for a signal of `length` samples.
constexpr std::size_t frame_count(std::size_t length, std::size_t hop) { return 1 + length / hop; }

// ---------------------------------------------------------------------------
// Mel scale
// ---------------------------------------------------------------------------

double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct MelFilterbank {
    std::size_t n_mels = 0;
    std::size_t n_fft_bins = 0;
    MatrixD weights;  // n_mels x n_fft_bins
    double f_min = 0.0;
    double f_max = 0.0;
};

/// Triangular filters equally spaced on the mel scale, each normalised to unit area over Hz.
MelFilterbank mel_filterbank(std::size_t n_mels = kMelBands, std::size_t fft_size = kFftSize,
                             double sample_rate = kAudioRate, double f_min = 0.0, double f_max = -1.0);

/// frames x bins power -> frames x n_mels.
MatrixD apply_mel(const MatrixD& power_spec, const MelFilterbank& fb);

// ---------------------------------------------------------------------------
// Decibels
// ---------------------------------------------------------------------------

/// 10*log10(max(p, 1e-10) / reference), clipped below at floor_db.
MatrixD power_to_db(const MatrixD& power, double reference, double floor_db);
double power_to_db(double power, double reference, double floor_db);

/// reference * 10^(db/10).
MatrixD db_to_power(const MatrixD& db, double reference);
double db_to_power(double db, double reference);

// ---------------------------------------------------------------------------
// Griffin-Lim
// ---------------------------------------------------------------------------

struct GriffinLimResult {
    std::vector<double> signal;
    /// residual[k] = || |STFT(x_k)| - M ||_F / ||M||_F after iteration k+1.
    std::vector<double> residual;
};

/// Zero-phase initialised Griffin-Lim without momentum. The magnitude is
/// frames x (fft_size/2+1) for a centred STFT; the returned signal has
/// (frames-1)*hop samples unless `length` is given.
GriffinLimResult griffin_lim(const MatrixD& magnitude, std::size_t iters, const StftConfig& cfg = {},
                             std::size_t length = 0);

// ---------------------------------------------------------------------------
// Periodogram
// ---------------------------------------------------------------------------

/// One-sided |DFT|^2 of the Hann-windowed channel divided by sum(w^2);
/// floor(N/2)+1 values.
std::vector<double> periodogram(std::span<const double> channel);

}  // namespace cortical::dsp
