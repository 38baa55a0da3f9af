#include "cortical/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "cortical/simd.hpp"
#include "fft.hpp"

namespace cortical::dsp {
namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// numpy-style 'reflect' padding index (edge sample not repeated).
std::size_t reflect_index(long long i, std::size_t len) {
    if (len == 1) return 0;
    const long long period = 2 * static_cast<long long>(len - 1);
    long long m = i % period;
    if (m < 0) m += period;
    if (m >= static_cast<long long>(len)) m = period - m;
    return static_cast<std::size_t>(m);
}

void check_window(const WindowSpec& w, std::size_t fft_size) {
    if (w.length != fft_size) throw InvalidInput("window length must equal fft_size");
}

// Frames taken directly from `y` (no padding), frame f starting at f*hop.
void analyze(std::span<const double> y, std::size_t frames, std::size_t n, std::size_t hop,
             const std::vector<double>& w, std::vector<std::complex<double>>& out) {
    const std::size_t bins = n / 2 + 1;
    out.resize(frames * bins);
    std::vector<double> buf(n);
    for (std::size_t f = 0; f < frames; ++f) {
        const double* src = y.data() + f * hop;
        for (std::size_t i = 0; i < n; ++i) buf[i] = src[i] * w[i];
        detail::rfft(buf.data(), out.data() + f * bins, n);
    }
}

// Least-squares overlap-add: y = sum_f w * ifft(X_f) / sum_f w^2 over the
// padded domain of n + (frames-1)*hop samples.
std::vector<double> overlap_add(const std::complex<double>* spec, std::size_t frames, std::size_t n,
                                std::size_t hop, const std::vector<double>& w) {
    const std::size_t bins = n / 2 + 1;
    const std::size_t len = n + (frames - 1) * hop;
    std::vector<double> y(len, 0.0), wss(len, 0.0), buf(n);
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t f = 0; f < frames; ++f) {
        detail::irfft(spec + f * bins, buf.data(), n);
        double* dst = y.data() + f * hop;
        double* acc = wss.data() + f * hop;
        for (std::size_t i = 0; i < n; ++i) {
            dst[i] += buf[i] * scale * w[i];
            acc[i] += w[i] * w[i];
        }
    }
    for (std::size_t i = 0; i < len; ++i)
        if (wss[i] > std::numeric_limits<double>::min()) y[i] /= wss[i];
    return y;
}

}  // namespace

std::vector<double> make_window(const WindowSpec& spec) {
    std::vector<double> w(spec.length);
    const double n = static_cast<double>(spec.length);
    for (std::size_t i = 0; i < spec.length; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / n);
    return w;
}

MatrixD ComplexSpectrogram::magnitude() const {
    MatrixD m(frames, bins);
    for (std::size_t i = 0; i < data.size(); ++i) m.data[i] = std::abs(data[i]);
    return m;
}

MatrixD ComplexSpectrogram::power() const {
    MatrixD m(frames, bins);
    for (std::size_t i = 0; i < data.size(); ++i) m.data[i] = std::norm(data[i]);
    return m;
}

ComplexSpectrogram stft(std::span<const double> signal, const StftConfig& cfg) {
    if (signal.empty()) throw InvalidInput("stft: empty signal");
    if (cfg.hop == 0) throw InvalidInput("stft: hop must be positive");
    if (!is_power_of_two(cfg.fft_size)) throw InvalidInput("stft: fft_size must be a power of two");
    if (cfg.hop > cfg.fft_size) throw InvalidInput("stft: hop exceeds fft_size");
    check_window(cfg.window, cfg.fft_size);

    const std::size_t n = cfg.fft_size;
    std::vector<double> padded;
    std::span<const double> frames_src = signal;
    std::size_t frames = 0;
    if (cfg.center) {
        const std::size_t pad = n / 2;
        padded.resize(signal.size() + 2 * pad);
        for (std::size_t i = 0; i < padded.size(); ++i)
            padded[i] = signal[reflect_index(static_cast<long long>(i) - static_cast<long long>(pad), signal.size())];
        frames_src = padded;
        frames = frame_count(signal.size(), cfg.hop);
    } else {
        if (signal.size() < n) throw InvalidInput("stft: signal shorter than fft_size without centering");
        frames = 1 + (signal.size() - n) / cfg.hop;
    }

    ComplexSpectrogram out;
    out.frames = frames;
    out.bins = n / 2 + 1;
    out.fft_size = n;
    out.hop = cfg.hop;
    out.sample_rate = cfg.sample_rate;
    out.center = cfg.center;
    out.signal_length = signal.size();
    analyze(frames_src, frames, n, cfg.hop, make_window(cfg.window), out.data);
    return out;
}

std::vector<double> istft(const ComplexSpectrogram& spec, const WindowSpec& window, std::size_t length) {
    check_window(window, spec.fft_size);
    if (spec.frames == 0 || spec.hop == 0) throw InvalidInput("istft: empty spectrogram");
    if (spec.bins != spec.fft_size / 2 + 1 || spec.data.size() != spec.frames * spec.bins)
        throw InvalidInput("istft: inconsistent spectrogram shape");

    const std::size_t n = spec.fft_size;
    auto y = overlap_add(spec.data.data(), spec.frames, n, spec.hop, make_window(window));
    if (length == 0) length = spec.signal_length;
    const std::size_t offset = spec.center ? n / 2 : 0;
    if (length == 0) length = spec.center ? (spec.frames - 1) * spec.hop : y.size();

    std::vector<double> out(length, 0.0);
    const std::size_t avail = y.size() > offset ? y.size() - offset : 0;
    std::copy_n(y.begin() + static_cast<std::ptrdiff_t>(offset), std::min(length, avail), out.begin());
    return out;
}

// ---------------------------------------------------------------------------

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank mel_filterbank(std::size_t n_mels, std::size_t fft_size, double sample_rate, double f_min,
                             double f_max) {
    const double nyquist = sample_rate / 2.0;
    if (f_max < 0.0) f_max = nyquist;
    if (n_mels < 1) throw InvalidInput("mel_filterbank: n_mels must be >= 1");
    if (fft_size < 2) throw InvalidInput("mel_filterbank: fft_size too small");
    if (f_max > nyquist * (1.0 + 1e-12)) throw InvalidInput("mel_filterbank: f_max exceeds Nyquist");
    if (!(f_min >= 0.0 && f_min < f_max)) throw InvalidInput("mel_filterbank: need 0 <= f_min < f_max");

    MelFilterbank fb;
    fb.n_mels = n_mels;
    fb.n_fft_bins = fft_size / 2 + 1;
    fb.f_min = f_min;
    fb.f_max = f_max;
    fb.weights = MatrixD(n_mels, fb.n_fft_bins);

    const double mel_lo = hz_to_mel(f_min);
    const double mel_hi = hz_to_mel(f_max);
    std::vector<double> edges(n_mels + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));

    const double bin_hz = sample_rate / static_cast<double>(fft_size);
    for (std::size_t m = 0; m < n_mels; ++m) {
        const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
        const double area_norm = 2.0 / (hi - lo);
        for (std::size_t k = 0; k < fb.n_fft_bins; ++k) {
            const double f = static_cast<double>(k) * bin_hz;
            const double rise = (f - lo) / (mid - lo);
            const double fall = (hi - f) / (hi - mid);
            fb.weights(m, k) = std::max(0.0, std::min(rise, fall)) * area_norm;
        }
    }
    return fb;
}

MatrixD apply_mel(const MatrixD& power_spec, const MelFilterbank& fb) {
    if (power_spec.cols != fb.n_fft_bins || fb.weights.cols != fb.n_fft_bins || fb.weights.rows != fb.n_mels)
        throw InvalidInput("apply_mel: power spectrum bins do not match filterbank");
    for (double p : power_spec.data)
        if (!(p >= 0.0)) throw InvalidInput("apply_mel: power must be non-negative and finite");
    MatrixD out(power_spec.rows, fb.n_mels);
    simd::gemm(simd::Trans::no, simd::Trans::yes, power_spec.rows, fb.n_mels, fb.n_fft_bins,
               power_spec.data.data(), power_spec.cols, fb.weights.data.data(), fb.weights.cols,
               out.data.data(), out.cols);
    // FMA rounding can leave -0.0 or tiny negatives on exact-zero inputs.
    for (double& v : out.data) v = std::max(v, 0.0);
    return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_db_args(double reference, double floor_db) {
    if (!(reference > 0.0)) throw InvalidInput("power_to_db: reference must be positive");
    if (!(floor_db < 0.0)) throw InvalidInput("power_to_db: floor must be negative");
}

double to_db(double power, double reference, double floor_db) {
    return std::max(10.0 * std::log10(std::max(power, kDbEpsilon) / reference), floor_db);
}

}  // namespace

double power_to_db(double power, double reference, double floor_db) {
    check_db_args(reference, floor_db);
    return to_db(power, reference, floor_db);
}

MatrixD power_to_db(const MatrixD& power, double reference, double floor_db) {
    check_db_args(reference, floor_db);
    MatrixD out(power.rows, power.cols);
    for (std::size_t i = 0; i < power.data.size(); ++i) out.data[i] = to_db(power.data[i], reference, floor_db);
    return out;
}

double db_to_power(double db, double reference) { return reference * std::pow(10.0, db / 10.0); }

MatrixD db_to_power(const MatrixD& db, double reference) {
    MatrixD out(db.rows, db.cols);
    for (std::size_t i = 0; i < db.data.size(); ++i) out.data[i] = db_to_power(db.data[i], reference);
    return out;
}

// ---------------------------------------------------------------------------

GriffinLimResult griffin_lim(const MatrixD& magnitude, std::size_t iters, const StftConfig& cfg,
                             std::size_t length) {
    const std::size_t n = cfg.fft_size;
    const std::size_t bins = n / 2 + 1;
    if (iters < 1) throw InvalidInput("griffin_lim: iters must be >= 1");
    if (magnitude.rows == 0 || magnitude.cols != bins) throw InvalidInput("griffin_lim: magnitude shape");
    if (cfg.hop == 0 || cfg.hop > n || !is_power_of_two(n)) throw InvalidInput("griffin_lim: bad STFT config");
    check_window(cfg.window, n);
    for (double m : magnitude.data)
        if (!(m >= 0.0)) throw InvalidInput("griffin_lim: magnitude must be non-negative and finite");

    const std::size_t frames = magnitude.rows;
    const auto w = make_window(cfg.window);
    double mag_norm = 0.0;
    for (double m : magnitude.data) mag_norm += m * m;
    mag_norm = std::sqrt(mag_norm);

    // Iterate in the padded domain (no reflection) so that each synthesis step
    // is the exact least-squares inverse and the residual cannot grow.
    std::vector<std::complex<double>> spec(frames * bins);
    for (std::size_t i = 0; i < spec.size(); ++i) spec[i] = magnitude.data[i];
    auto y = overlap_add(spec.data(), frames, n, cfg.hop, w);

    GriffinLimResult result;
    result.residual.reserve(iters);
    std::vector<std::complex<double>> analysis;
    analyze(y, frames, n, cfg.hop, w, analysis);
    for (std::size_t it = 0; it < iters; ++it) {
        for (std::size_t i = 0; i < spec.size(); ++i) {
            const double a = std::abs(analysis[i]);
            spec[i] = a > 0.0 ? analysis[i] * (magnitude.data[i] / a) : std::complex<double>(magnitude.data[i], 0.0);
        }
        y = overlap_add(spec.data(), frames, n, cfg.hop, w);
        analyze(y, frames, n, cfg.hop, w, analysis);
        double err = 0.0;
        for (std::size_t i = 0; i < spec.size(); ++i) {
            const double d = std::abs(analysis[i]) - magnitude.data[i];
            err += d * d;
        }
        result.residual.push_back(mag_norm > 0.0 ? std::sqrt(err) / mag_norm : 0.0);
    }

    const std::size_t offset = cfg.center ? n / 2 : 0;
    if (length == 0) length = cfg.center ? (frames - 1) * cfg.hop : y.size();
    result.signal.assign(length, 0.0);
    const std::size_t avail = y.size() - offset;
    std::copy_n(y.begin() + static_cast<std::ptrdiff_t>(offset), std::min(length, avail), result.signal.begin());
    return result;
}

// ---------------------------------------------------------------------------

std::vector<double> periodogram(std::span<const double> channel) {
    const std::size_t n = channel.size();
    if (n < 2) throw InvalidInput("periodogram: need at least two samples");
    const auto w = make_window({WindowKind::hann, n});
    std::vector<double> buf(n);
    double wss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        buf[i] = channel[i] * w[i];
        wss += w[i] * w[i];
    }
    std::vector<std::complex<double>> spec(n / 2 + 1);
    detail::rfft(buf.data(), spec.data(), n);
    std::vector<double> out(spec.size());
    for (std::size_t k = 0; k < spec.size(); ++k) out[k] = std::norm(spec[k]) / wss;
    return out;
}

}  // namespace cortical::dsp
