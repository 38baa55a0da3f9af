#pragma once

#include <cstddef>
#include <string>
#include <utility>

#include "cortical/common.hpp"

namespace cortical::eeg {

inline constexpr std::size_t kChannels = 125;
inline constexpr double kEegRate = 125.0;

/// One second of multichannel EEG, channels x samples, microvolts.
struct EegEpoch {
    MatrixD data;
    double sample_rate = kEegRate;

    std::size_t channels() const { return data.rows; }
    std::size_t samples() const { return data.cols; }
};

enum class InputKind { raw, psd };

/// 2-D network input with values in [0, 1].
struct InputImage {
    InputKind kind = InputKind::raw;
    MatrixD data;  // raw: channels x samples; psd: frequency x channels
};

/// channels x samples, min-max normalised per epoch (constant epochs map to 0.5).
InputImage raw_image(const EegEpoch& epoch);

/// Per-channel periodogram stacked as frequency x channel, in dB relative to the
/// epoch maximum with a -100 dB floor, then min-max normalised.
InputImage psd_image(const EegEpoch& epoch);

/// Rows/cols an input image of `kind` has for an epoch of the given shape.
std::pair<std::size_t, std::size_t> input_shape(InputKind kind, std::size_t channels = kChannels,
                                                std::size_t samples = static_cast<std::size_t>(kEegRate));

const char* to_string(InputKind kind);
InputKind parse_input_kind(const std::string& s);

}  // namespace cortical::eeg
