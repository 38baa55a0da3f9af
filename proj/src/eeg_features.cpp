#include "cortical/eeg_features.hpp"

#include <algorithm>
#include <cmath>

#include "cortical/dsp.hpp"

namespace cortical::eeg {
namespace {

void validate(const EegEpoch& epoch) {
    if (epoch.data.rows == 0 || epoch.data.cols == 0) throw InvalidInput("EEG epoch is empty");
    for (double v : epoch.data.data)
        if (!std::isfinite(v)) throw InvalidInput("EEG epoch contains NaN or Inf");
}

void min_max_normalize(MatrixD& m) {
    const auto [lo, hi] = std::minmax_element(m.data.begin(), m.data.end());
    const double min = *lo, range = *hi - *lo;
    if (range <= 0.0) {
        std::fill(m.data.begin(), m.data.end(), 0.5);
        return;
    }
    for (double& v : m.data) v = std::clamp((v - min) / range, 0.0, 1.0);
}

}  // namespace

InputImage raw_image(const EegEpoch& epoch) {
    validate(epoch);
    InputImage img{InputKind::raw, epoch.data};
    min_max_normalize(img.data);
    return img;
}

InputImage psd_image(const EegEpoch& epoch) {
    validate(epoch);
    const std::size_t channels = epoch.channels();
    const std::size_t bins = epoch.samples() / 2 + 1;
    MatrixD power(bins, channels);
    for (std::size_t c = 0; c < channels; ++c) {
        const auto p = dsp::periodogram(epoch.data.row(c));
        for (std::size_t k = 0; k < bins; ++k) power(k, c) = p[k];
    }
    const double peak = *std::max_element(power.data.begin(), power.data.end());
    InputImage img{InputKind::psd, dsp::power_to_db(power, peak > 0.0 ? peak : 1.0, -100.0)};
    min_max_normalize(img.data);
    return img;
}

std::pair<std::size_t, std::size_t> input_shape(InputKind kind, std::size_t channels, std::size_t samples) {
    if (kind == InputKind::raw) return {channels, samples};
    return {samples / 2 + 1, channels};
}

const char* to_string(InputKind kind) { return kind == InputKind::raw ? "raw" : "psd"; }

InputKind parse_input_kind(const std::string& s) {
    if (s == "raw") return InputKind::raw;
    if (s == "psd") return InputKind::psd;
    throw InvalidInput("unknown input kind '" + s + "' (expected raw or psd)");
}

}  // namespace cortical::eeg
