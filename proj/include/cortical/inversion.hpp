#pragma once

// Model-output spectrograms back to audio: denormalisation, mel -> linear
// magnitude recovery, Griffin-Lim and 16-bit WAV export.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cortical/common.hpp"
#include "cortical/dataset.hpp"
#include "cortical/dsp.hpp"

namespace cortical::inversion {

inline constexpr double kMinRefDb = 40.0;
inline constexpr double kMaxRefDb = 60.0;
inline constexpr std::size_t kClipSeconds = 5;
inline constexpr std::size_t kClipSamples = kClipSeconds * 22050;

struct InversionConfig {
    double max_db = 100.0;
    /// Per-song reference level. Songs without an entry use default_ref_db.
    std::map<std::uint16_t, double> ref_db_per_song{{1, 46.0}, {2, 46.0}, {3, 52.0}, {4, 43.0}};
    double default_ref_db = 46.0;
    std::size_t gla_iters = 60;
    std::size_t nnls_iters = 200;
    double peak = 0.95;

    double ref_db(std::uint16_t song_id) const;
    /// InvalidInput when a field is out of range (ref_db outside [40, 60]).
    void validate() const;
};

/// Plain-text "key = value" lines; '#' starts a comment. Keys: max_db,
/// default_ref_db, ref_db.<song>, gla_iters, nnls_iters, peak.
InversionConfig parse_inversion_config(const std::string& text);
InversionConfig load_inversion_config(const std::filesystem::path& path);
std::string to_text(const InversionConfig& cfg);

/// dB = value * max_db - max_db + ref_db, returned bins x frames.
/// InvalidInput for linear images or values outside [0, 1].
MatrixD denormalize(const data::SpectroImage& mel_norm, double max_db, double ref_db);

struct NnlsResult {
    MatrixD magnitude;  // frames x fft bins
    /// residual(k, f) = || W s_k - m_f || for iterate k (row 0 is the initial guess).
    MatrixD residual;
};

/// Per frame, solves min ||W s - m|| subject to s >= 0 with multiplicative
/// updates started from W^T m, and returns sqrt(s).
NnlsResult mel_to_linear_magnitude(const MatrixD& mel_power, const dsp::MelFilterbank& fb, std::size_t iters,
                                   bool track_residual = false);

struct ClipSecond {
    data::SpectroImage image;  // frames x mel bins, normalised
    std::uint16_t participant_id = 0;
    std::uint16_t song_id = 0;
    std::uint32_t second_index = 0;
};

struct ClipSource {
    std::uint16_t participant_id = 0;
    std::uint16_t song_id = 0;
    std::uint32_t start_second = 0;
};

struct AudioClip {
    std::vector<float> samples;
    double sample_rate = 22050.0;
    ClipSource source;
    double peak_before_normalization = 0.0;
    double energy_before_normalization = 0.0;
    std::vector<double> gla_residual;
};

/// Frames x mel power -> waveform of `length` samples, before peak normalisation.
std::vector<double> invert_mel_power(const MatrixD& mel_power, const InversionConfig& cfg, std::size_t length,
                                     std::vector<double>* gla_residual = nullptr);

/// Five consecutive one-second outputs of one song -> a 5 s clip. Values are
/// clipped to [0, 1] first, since a linear output head can overshoot.
/// InvalidInput for mixed songs or participants, gaps, or a count other than five.
AudioClip invert_clip(const std::vector<ClipSecond>& seconds, const InversionConfig& cfg);

/// "p{P}_s{S}_t{T}.wav" with two-digit ids and a three-digit start second.
std::string clip_name(const ClipSource& s);

// ---------------------------------------------------------------------------
// WAV

/// PCM 16-bit mono. Samples are clamped to [-1, 1] and quantised as round(x * 32767).
std::vector<std::uint8_t> encode_wav(const std::vector<float>& samples, std::uint32_t sample_rate = 22050);
void write_wav(const AudioClip& clip, const std::filesystem::path& path);

struct WavInfo {
    std::uint16_t format = 0;
    std::uint16_t channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t bits = 0;
    std::uint32_t data_bytes = 0;
    std::vector<std::int16_t> samples;
};
/// Parses the subset written by encode_wav. FormatError on anything else.
WavInfo decode_wav(const std::vector<std::uint8_t>& bytes);

}  // namespace cortical::inversion
