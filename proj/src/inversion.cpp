#include "cortical/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "binio.hpp"

namespace cortical::inversion {

double InversionConfig::ref_db(std::uint16_t song_id) const {
    const auto it = ref_db_per_song.find(song_id);
    return it == ref_db_per_song.end() ? default_ref_db : it->second;
}

void InversionConfig::validate() const {
    auto check_ref = [](double v, const std::string& what) {
        if (!(v >= kMinRefDb && v <= kMaxRefDb))
            throw InvalidInput(what + " = " + std::to_string(v) + " is outside [40, 60] dB");
    };
    check_ref(default_ref_db, "default_ref_db");
    for (const auto& [song, v] : ref_db_per_song) check_ref(v, "ref_db." + std::to_string(song));
    if (!(max_db > 0.0) || !std::isfinite(max_db)) throw InvalidInput("max_db must be positive");
    if (gla_iters == 0) throw InvalidInput("gla_iters must be >= 1");
    if (!(peak > 0.0 && peak <= 1.0)) throw InvalidInput("peak must lie in (0, 1]");
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v, const std::string& key) {
    std::size_t used = 0;
    double d;
    try {
        d = std::stod(v, &used);
    } catch (const std::exception&) {
        throw InvalidInput("inversion config: " + key + " is not a number: '" + v + "'");
    }
    if (used != v.size() || !std::isfinite(d)) throw InvalidInput("inversion config: bad value for " + key);
    return d;
}

std::size_t parse_count(const std::string& v, const std::string& key) {
    const double d = parse_double(v, key);
    if (d < 0 || d != std::floor(d)) throw InvalidInput("inversion config: " + key + " must be a whole number");
    return static_cast<std::size_t>(d);
}

}  // namespace

InversionConfig parse_inversion_config(const std::string& text) {
    InversionConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidInput("inversion config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
        if (key == "max_db")
            cfg.max_db = parse_double(val, key);
        else if (key == "default_ref_db")
            cfg.default_ref_db = parse_double(val, key);
        else if (key == "gla_iters")
            cfg.gla_iters = parse_count(val, key);
        else if (key == "nnls_iters")
            cfg.nnls_iters = parse_count(val, key);
        else if (key == "peak")
            cfg.peak = parse_double(val, key);
        else if (key.rfind("ref_db.", 0) == 0) {
            const std::size_t song = parse_count(key.substr(7), key);
            if (song > 65535) throw InvalidInput("inversion config: song id out of range in " + key);
            cfg.ref_db_per_song[static_cast<std::uint16_t>(song)] = parse_double(val, key);
        } else {
            throw InvalidInput("inversion config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

InversionConfig load_inversion_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_inversion_config(ss.str());
}

std::string to_text(const InversionConfig& cfg) {
    std::ostringstream os;
    os << "max_db = " << cfg.max_db << "\n";
    os << "default_ref_db = " << cfg.default_ref_db << "\n";
    for (const auto& [song, v] : cfg.ref_db_per_song) os << "ref_db." << song << " = " << v << "\n";
    os << "gla_iters = " << cfg.gla_iters << "\n";
    os << "nnls_iters = " << cfg.nnls_iters << "\n";
    os << "peak = " << cfg.peak << "\n";
    return os.str();
}

MatrixD denormalize(const data::SpectroImage& mel_norm, double max_db, double ref_db) {
    if (mel_norm.kind != nn::TargetKind::mel) throw InvalidInput("denormalize: expects a mel spectrogram");
    if (!(max_db > 0.0)) throw InvalidInput("denormalize: max_db must be positive");
    const auto& m = mel_norm.data;
    MatrixD db(m.cols, m.rows);
    for (std::size_t f = 0; f < m.rows; ++f)
        for (std::size_t b = 0; b < m.cols; ++b) {
            const double v = m(f, b);
            if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("denormalize: values must lie in [0, 1]");
            db(b, f) = v * max_db - max_db + ref_db;
        }
    return db;
}

NnlsResult mel_to_linear_magnitude(const MatrixD& mel_power, const dsp::MelFilterbank& fb, std::size_t iters,
                                   bool track_residual) {
    const auto& W = fb.weights;
    if (mel_power.cols != W.rows) throw InvalidInput("mel_to_linear_magnitude: mel band count mismatch");
    for (double v : mel_power.data)
        if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidInput("mel_to_linear_magnitude: power must be >= 0");

    // Each filter is non-zero on a contiguous bin range.
    const std::size_t mels = W.rows, bins = W.cols;
    std::vector<std::size_t> lo(mels, 0), hi(mels, 0);
    for (std::size_t m = 0; m < mels; ++m) {
        std::size_t a = bins, b = 0;
        for (std::size_t k = 0; k < bins; ++k)
            if (W(m, k) != 0.0) {
                a = std::min(a, k);
                b = k + 1;
            }
        lo[m] = a < b ? a : 0;
        hi[m] = a < b ? b : 0;
    }
    auto forward = [&](const std::vector<double>& s, std::vector<double>& out) {
        for (std::size_t m = 0; m < mels; ++m) {
            double acc = 0.0;
            for (std::size_t k = lo[m]; k < hi[m]; ++k) acc += W(m, k) * s[k];
            out[m] = acc;
        }
    };
    auto adjoint = [&](const std::vector<double>& y, std::vector<double>& out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t m = 0; m < mels; ++m)
            for (std::size_t k = lo[m]; k < hi[m]; ++k) out[k] += W(m, k) * y[m];
    };
    auto residual = [&](const std::vector<double>& ws, std::span<const double> target) {
        double r = 0.0;
        for (std::size_t m = 0; m < mels; ++m) r += (ws[m] - target[m]) * (ws[m] - target[m]);
        return std::sqrt(r);
    };

    NnlsResult res;
    res.magnitude = MatrixD(mel_power.rows, bins);
    if (track_residual) res.residual = MatrixD(iters + 1, mel_power.rows);
    std::vector<double> target(mels), s(bins), numer(bins), denom(bins), ws(mels);
    for (std::size_t f = 0; f < mel_power.rows; ++f) {
        const auto row = mel_power.row(f);
        std::copy(row.begin(), row.end(), target.begin());
        adjoint(target, numer);  // W^T m, also the starting point
        s = numer;
        forward(s, ws);
        if (track_residual) res.residual(0, f) = residual(ws, row);
        for (std::size_t it = 0; it < iters; ++it) {
            adjoint(ws, denom);
            for (std::size_t k = 0; k < bins; ++k) s[k] = denom[k] > 0.0 ? s[k] * numer[k] / denom[k] : 0.0;
            forward(s, ws);
            if (track_residual) res.residual(it + 1, f) = residual(ws, row);
        }
        for (std::size_t k = 0; k < bins; ++k) res.magnitude(f, k) = std::sqrt(s[k]);
    }
    return res;
}

std::vector<double> invert_mel_power(const MatrixD& mel_power, const InversionConfig& cfg, std::size_t length,
                                     std::vector<double>* gla_residual) {
    static const dsp::MelFilterbank fb = dsp::mel_filterbank();
    const auto mag = mel_to_linear_magnitude(mel_power, fb, cfg.nnls_iters).magnitude;
    auto gl = dsp::griffin_lim(mag, cfg.gla_iters, {}, length);
    if (gla_residual) *gla_residual = std::move(gl.residual);
    return std::move(gl.signal);
}

AudioClip invert_clip(const std::vector<ClipSecond>& seconds, const InversionConfig& cfg) {
    cfg.validate();
    if (seconds.size() != kClipSeconds)
        throw InvalidInput("invert_clip: expected 5 one-second outputs, got " + std::to_string(seconds.size()));
    const auto& first = seconds.front();
    for (std::size_t i = 0; i < seconds.size(); ++i) {
        const auto& s = seconds[i];
        if (s.song_id != first.song_id) throw InvalidInput("invert_clip: outputs come from different songs");
        if (s.participant_id != first.participant_id)
            throw InvalidInput("invert_clip: outputs come from different participants");
        if (s.second_index != first.second_index + i) throw InvalidInput("invert_clip: outputs are not consecutive");
        if (s.image.kind != nn::TargetKind::mel) throw InvalidInput("invert_clip: expects mel outputs");
        if (s.image.data.rows != first.image.data.rows || s.image.data.cols != dsp::kMelBands)
            throw InvalidInput("invert_clip: output shape mismatch");
    }

    const std::size_t per = first.image.data.rows;
    const double ref = cfg.ref_db(first.song_id);
    MatrixD mel_power(per * seconds.size(), dsp::kMelBands);
    for (std::size_t i = 0; i < seconds.size(); ++i) {
        data::SpectroImage clipped = seconds[i].image;
        for (double& v : clipped.data.data) {
            if (!std::isfinite(v)) throw InvalidInput("invert_clip: non-finite model output");
            v = std::clamp(v, 0.0, 1.0);
        }
        const auto db = denormalize(clipped, cfg.max_db, ref);  // bins x frames
        for (std::size_t f = 0; f < per; ++f)
            for (std::size_t b = 0; b < dsp::kMelBands; ++b)
                mel_power(i * per + f, b) = dsp::db_to_power(db(b, f), 1.0);
    }

    AudioClip clip;
    clip.source = {first.participant_id, first.song_id, first.second_index};
    const auto signal = invert_mel_power(mel_power, cfg, kClipSamples, &clip.gla_residual);
    double peak = 0.0, energy = 0.0;
    for (double v : signal) {
        peak = std::max(peak, std::abs(v));
        energy += v * v;
    }
    clip.peak_before_normalization = peak;
    clip.energy_before_normalization = energy;
    const double g = peak > 0.0 ? cfg.peak / peak : 0.0;
    clip.samples.resize(signal.size());
    for (std::size_t i = 0; i < signal.size(); ++i) clip.samples[i] = static_cast<float>(signal[i] * g);
    return clip;
}

std::string clip_name(const ClipSource& s) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "p%02u_s%02u_t%03u.wav", static_cast<unsigned>(s.participant_id),
                  static_cast<unsigned>(s.song_id), static_cast<unsigned>(s.start_second));
    return buf;
}

// ---------------------------------------------------------------------------
// WAV

std::vector<std::uint8_t> encode_wav(const std::vector<float>& samples, std::uint32_t sample_rate) {
    const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    detail::ByteWriter w;
    w.bytes("RIFF", 4);
    w.put<std::uint32_t>(36 + data_bytes);
    w.bytes("WAVE", 4);
    w.bytes("fmt ", 4);
    w.put<std::uint32_t>(16);
    w.put<std::uint16_t>(1);  // PCM
    w.put<std::uint16_t>(1);  // mono
    w.put<std::uint32_t>(sample_rate);
    w.put<std::uint32_t>(sample_rate * 2);
    w.put<std::uint16_t>(2);
    w.put<std::uint16_t>(16);
    w.bytes("data", 4);
    w.put<std::uint32_t>(data_bytes);
    for (float x : samples) {
        const double c = std::isfinite(x) ? std::clamp(static_cast<double>(x), -1.0, 1.0) : 0.0;
        w.put(static_cast<std::int16_t>(std::lround(c * 32767.0)));
    }
    return std::move(w.buf);
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
    detail::write_file(path, encode_wav(clip.samples, static_cast<std::uint32_t>(clip.sample_rate)));
}

WavInfo decode_wav(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r(bytes, "WAV");
    auto tag = [&](const char* expect, const char* what) {
        const std::size_t at = r.pos();
        char t[4];
        for (char& c : t) c = static_cast<char>(r.get<std::uint8_t>(what));
        if (std::memcmp(t, expect, 4) != 0) throw FormatError(std::string("WAV: expected ") + expect, at);
    };
    tag("RIFF", "RIFF tag");
    r.get<std::uint32_t>("RIFF size");
    tag("WAVE", "WAVE tag");
    tag("fmt ", "fmt tag");
    const auto fmt_size = r.get<std::uint32_t>("fmt size");
    if (fmt_size != 16) throw FormatError("WAV: unsupported fmt chunk size", r.pos() - 4);
    WavInfo info;
    info.format = r.get<std::uint16_t>("format");
    info.channels = r.get<std::uint16_t>("channels");
    info.sample_rate = r.get<std::uint32_t>("sample rate");
    r.get<std::uint32_t>("byte rate");
    r.get<std::uint16_t>("block align");
    info.bits = r.get<std::uint16_t>("bits per sample");
    tag("data", "data tag");
    info.data_bytes = r.get<std::uint32_t>("data size");
    if (info.bits != 16 || info.data_bytes % 2) throw FormatError("WAV: expected 16-bit samples", r.pos());
    info.samples.resize(info.data_bytes / 2);
    r.array(std::span<std::int16_t>(info.samples), "samples");
    return info;
}

}  // namespace cortical::inversion
