#include "cortical/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <random>

#include "binio.hpp"
#include "cortical/dsp.hpp"

namespace cortical::data {
namespace {

constexpr char kEegbMagic[4] = {'E', 'E', 'G', 'B'};
constexpr char kExstMagic[4] = {'E', 'X', 'S', 'T'};
constexpr std::uint8_t kExampleVersion = 1;
constexpr std::size_t kEegbHeader = 4 + 1 + 2 + 2 + 4 + 4 + 4 + 8 + 8 + 4;

void check_finite(std::span<const float> v, std::size_t base_offset, const char* what) {
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!std::isfinite(v[i]))
            throw FormatError(std::string("EEGB: non-finite ") + what + " value", base_offset + 4 * i);
}

}  // namespace

// ---------------------------------------------------------------------------
// EEGB

std::vector<std::uint8_t> encode_container(const Recording& rec) {
    if (rec.eeg.data.size() != rec.eeg.rows * rec.eeg.cols) throw InvalidInput("EEGB: inconsistent EEG matrix");
    for (float v : rec.eeg.data)
        if (!std::isfinite(v)) throw InvalidInput("EEGB: EEG contains non-finite values");
    for (float v : rec.audio)
        if (!std::isfinite(v)) throw InvalidInput("EEGB: audio contains non-finite values");
    if (!std::isfinite(rec.eeg_rate) || !std::isfinite(rec.audio_rate) || !std::isfinite(rec.onset_offset))
        throw InvalidInput("EEGB: non-finite header field");

    detail::ByteWriter w;
    w.buf.reserve(kEegbHeader + 4 * (rec.eeg.data.size() + rec.audio.size()));
    w.bytes(kEegbMagic, 4);
    w.put(kContainerVersion);
    w.put(rec.participant_id);
    w.put(rec.song_id);
    w.put(rec.eeg_rate);
    w.put(rec.audio_rate);
    w.put(static_cast<std::uint32_t>(rec.eeg.rows));
    w.put(static_cast<std::uint64_t>(rec.eeg.cols));
    w.put(static_cast<std::uint64_t>(rec.audio.size()));
    w.put(rec.onset_offset);
    w.array(std::span<const float>(rec.eeg.data));
    w.array(std::span<const float>(rec.audio));
    return std::move(w.buf);
}

Recording decode_container(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes, "EEGB");
    char magic[4];
    for (char& c : magic) c = static_cast<char>(r.get<std::uint8_t>("magic"));
    if (std::memcmp(magic, kEegbMagic, 4) != 0) throw FormatError("EEGB: bad magic", 0);
    const auto version = r.get<std::uint8_t>("version");
    if (version != kContainerVersion)
        throw UnsupportedVersion("EEGB version " + std::to_string(version) + " (expected 1)");

    Recording rec;
    rec.participant_id = r.get<std::uint16_t>("participant_id");
    rec.song_id = r.get<std::uint16_t>("song_id");
    const std::size_t rate_at = r.pos();
    rec.eeg_rate = r.get<float>("eeg_rate_hz");
    rec.audio_rate = r.get<float>("audio_rate_hz");
    if (!std::isfinite(rec.eeg_rate) || !std::isfinite(rec.audio_rate))
        throw FormatError("EEGB: non-finite sample rate", rate_at);
    const auto channels = r.get<std::uint32_t>("n_channels");
    const auto eeg_samples = r.get<std::uint64_t>("n_eeg_samples");
    const auto audio_samples = r.get<std::uint64_t>("n_audio_samples");
    const std::size_t offset_at = r.pos();
    rec.onset_offset = r.get<float>("onset_offset_s");
    if (!std::isfinite(rec.onset_offset)) throw FormatError("EEGB: non-finite onset offset", offset_at);

    // Guard the size arithmetic before allocating.
    const std::uint64_t avail = r.remaining() / 4;
    if (channels != 0 && eeg_samples > avail / channels)
        throw FormatError("EEGB truncated: EEG payload larger than file", r.pos());
    const std::uint64_t eeg_count = static_cast<std::uint64_t>(channels) * eeg_samples;
    if (audio_samples > avail - eeg_count) {
        r.need(4 * (eeg_count + audio_samples), "payload");
    }

    rec.eeg = MatrixF(channels, eeg_samples);
    const std::size_t eeg_at = r.pos();
    r.array(std::span<float>(rec.eeg.data), "EEG payload");
    check_finite(rec.eeg.data, eeg_at, "EEG");
    rec.audio.resize(audio_samples);
    const std::size_t audio_at = r.pos();
    r.array(std::span<float>(rec.audio), "audio payload");
    check_finite(rec.audio, audio_at, "audio");
    if (r.remaining() != 0) throw FormatError("EEGB: trailing bytes after audio payload", r.pos());
    return rec;
}

void store_container(const Recording& rec, const std::filesystem::path& path) {
    detail::write_file(path, encode_container(rec));
}

Recording load_container(const std::filesystem::path& path) { return decode_container(detail::read_file(path)); }

std::string container_name(const Recording& rec) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "p%02u_s%02u.eegb", static_cast<unsigned>(rec.participant_id),
                  static_cast<unsigned>(rec.song_id));
    return buf;
}

// ---------------------------------------------------------------------------
// Segmentation

std::vector<ChunkRole> split_chunks(std::size_t n_chunks, double ratio) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidInput("split_chunks: ratio must lie in (0, 1)");
    std::size_t cycle = 0, train = 0;
    for (std::size_t q = 2; q <= 20 && cycle == 0; ++q) {
        const double p = ratio * static_cast<double>(q);
        if (std::abs(p - std::round(p)) < 1e-9) {
            cycle = q;
            train = static_cast<std::size_t>(std::lround(p));
        }
    }
    if (cycle == 0) throw InvalidInput("split_chunks: ratio is not a fraction with denominator <= 20");
    std::vector<ChunkRole> roles(n_chunks);
    for (std::size_t i = 0; i < n_chunks; ++i) roles[i] = i % cycle < train ? ChunkRole::train : ChunkRole::test;
    return roles;
}

MatrixD target_power(std::span<const double> audio_second, TargetKind kind) {
    if (audio_second.size() != static_cast<std::size_t>(dsp::kAudioRate))
        throw InvalidInput("target_spectrogram: expected exactly one second (22050 samples)");
    auto power = dsp::stft(audio_second).power();
    if (kind == TargetKind::linear) return power;
    static const dsp::MelFilterbank fb = dsp::mel_filterbank();
    return dsp::apply_mel(power, fb);
}

SpectroImage normalize_target(const MatrixD& power, TargetKind kind, double ref_db, double max_db, double peak) {
    if (!(max_db > 0.0)) throw InvalidInput("normalize_target: max_db must be positive");
    if (!(peak > 0.0)) throw InvalidInput("normalize_target: peak power must be positive");
    SpectroImage img;
    img.kind = kind;
    img.ref_db = ref_db;
    img.max_db = max_db;
    img.data = MatrixD(power.rows, power.cols);
    for (std::size_t i = 0; i < power.data.size(); ++i) {
        const double db = 10.0 * std::log10(std::max(power.data[i], dsp::kDbEpsilon) / peak) + ref_db;
        img.data.data[i] = std::clamp((db - ref_db + max_db) / max_db, 0.0, 1.0);
    }
    return img;
}

SpectroImage target_spectrogram(std::span<const double> audio_second, TargetKind kind, double ref_db, double max_db,
                                double peak) {
    return normalize_target(target_power(audio_second, kind), kind, ref_db, max_db, peak);
}

Alignment align(const Recording& rec) {
    if (std::abs(rec.eeg_rate - eeg::kEegRate) > 1e-3)
        throw InvalidInput("recording EEG rate must be 125 Hz, got " + std::to_string(rec.eeg_rate));
    if (std::abs(rec.audio_rate - dsp::kAudioRate) > 1e-3)
        throw InvalidInput("recording audio rate must be 22050 Hz, got " + std::to_string(rec.audio_rate));
    if (!std::isfinite(rec.onset_offset)) throw AlignmentError("onset offset is not finite");
    if (rec.eeg.rows != eeg::kChannels)
        throw InvalidInput("recording must have 125 EEG channels, got " + std::to_string(rec.eeg.rows));

    Alignment a;
    a.audio_start_s = std::max(0.0, -static_cast<double>(rec.onset_offset));
    const long eeg_start = std::lround((a.audio_start_s + rec.onset_offset) * eeg::kEegRate);
    const long audio_start = std::lround(a.audio_start_s * dsp::kAudioRate);
    if (eeg_start < 0 || audio_start < 0) throw AlignmentError("negative stream start after alignment");
    a.eeg_start = static_cast<std::size_t>(eeg_start);
    a.audio_start = static_cast<std::size_t>(audio_start);
    const auto eeg_need = static_cast<std::size_t>(kUsableSeconds * eeg::kEegRate);
    const auto audio_need = static_cast<std::size_t>(kUsableSeconds * dsp::kAudioRate);
    if (a.eeg_start + eeg_need > rec.eeg.cols)
        throw AlignmentError("EEG stream covers less than 240 s after alignment (" +
                             std::to_string(rec.eeg.cols) + " samples, start " + std::to_string(a.eeg_start) + ")");
    if (a.audio_start + audio_need > rec.audio.size())
        throw AlignmentError("audio stream covers less than 240 s after alignment (" +
                             std::to_string(rec.audio.size()) + " samples)");
    return a;
}

SplitSets make_examples(const Recording& rec, eeg::InputKind input, TargetKind target,
                        const std::vector<ChunkRole>& roles, std::uint64_t seed) {
    if (roles.size() != kChunksPerRecording)
        throw InvalidInput("make_examples: expected 48 chunk roles, got " + std::to_string(roles.size()));
    const Alignment a = align(rec);
    const std::size_t seconds = static_cast<std::size_t>(kUsableSeconds);
    const std::size_t eeg_per_s = static_cast<std::size_t>(eeg::kEegRate);
    const std::size_t audio_per_s = static_cast<std::size_t>(dsp::kAudioRate);

    std::vector<MatrixD> powers(seconds);
    double peak = 0.0;
    std::vector<double> audio(audio_per_s);
    for (std::size_t s = 0; s < seconds; ++s) {
        const float* src = rec.audio.data() + a.audio_start + s * audio_per_s;
        std::copy(src, src + audio_per_s, audio.begin());
        powers[s] = target_power(audio, target);
        for (double p : powers[s].data) peak = std::max(peak, p);
    }
    if (!(peak > 0.0)) peak = 1.0;

    SplitSets out;
    out.train.input_kind = out.test.input_kind = input;
    out.train.target_kind = out.test.target_kind = target;
    eeg::EegEpoch epoch;
    epoch.data = MatrixD(rec.eeg.rows, eeg_per_s);
    for (std::size_t s = 0; s < seconds; ++s) {
        for (std::size_t ch = 0; ch < rec.eeg.rows; ++ch) {
            const float* src = rec.eeg.data.data() + ch * rec.eeg.cols + a.eeg_start + s * eeg_per_s;
            std::copy(src, src + eeg_per_s, epoch.data.data.begin() + static_cast<std::ptrdiff_t>(ch * eeg_per_s));
        }
        const auto img = input == eeg::InputKind::raw ? eeg::raw_image(epoch) : eeg::psd_image(epoch);
        const auto tgt = normalize_target(powers[s], target, 0.0, kMaxDb, peak);

        ExamplePair e;
        e.input = MatrixF(img.data.rows, img.data.cols);
        std::transform(img.data.data.begin(), img.data.data.end(), e.input.data.begin(),
                       [](double v) { return static_cast<float>(v); });
        e.target = MatrixF(tgt.data.rows, tgt.data.cols);
        std::transform(tgt.data.data.begin(), tgt.data.data.end(), e.target.data.begin(),
                       [](double v) { return static_cast<float>(v); });
        e.song_id = rec.song_id;
        e.participant_id = rec.participant_id;
        e.second_index = static_cast<std::uint32_t>(s);
        e.chunk_index = static_cast<std::uint32_t>(s / static_cast<std::size_t>(kChunkSeconds));
        (roles[e.chunk_index] == ChunkRole::train ? out.train : out.test).examples.push_back(std::move(e));
    }
    std::mt19937_64 rng(derive_seed(seed, rec.participant_id, rec.song_id));
    cortical::shuffle(out.train.examples.begin(), out.train.examples.end(), rng);
    return out;
}

SplitSets make_corpus_examples(const std::vector<Recording>& corpus, eeg::InputKind input, TargetKind target,
                               std::uint64_t seed, double ratio) {
    if (corpus.empty()) throw InvalidInput("make_corpus_examples: empty corpus");
    const auto roles = split_chunks(kChunksPerRecording, ratio);
    SplitSets all;
    all.train.input_kind = all.test.input_kind = input;
    all.train.target_kind = all.test.target_kind = target;
    for (const auto& rec : corpus) {
        auto part = make_examples(rec, input, target, roles, seed);
        for (auto& e : part.train.examples) all.train.examples.push_back(std::move(e));
        for (auto& e : part.test.examples) all.test.examples.push_back(std::move(e));
    }
    std::mt19937_64 rng(derive_seed(seed, 0xC0A5));
    cortical::shuffle(all.train.examples.begin(), all.train.examples.end(), rng);
    return all;
}

std::vector<std::uint16_t> song_ids(const ExampleSet& set) {
    std::vector<std::uint16_t> ids;
    for (const auto& e : set.examples) ids.push_back(e.song_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

nn::Dataset to_dataset(const ExampleSet& set, bool labels) {
    nn::Dataset d;
    if (set.examples.empty()) return d;
    const auto& first = set.examples.front();
    const nn::Shape in{first.input.rows, first.input.cols, 1};
    d.inputs = nn::Tensor<float>(set.examples.size(), in);
    const std::size_t per_target = first.target.size();
    d.targets.resize(set.examples.size() * per_target);
    std::map<std::uint16_t, std::size_t> label_of;
    if (labels) {
        const auto ids = song_ids(set);
        for (std::size_t i = 0; i < ids.size(); ++i) label_of[ids[i]] = i;
    }
    for (std::size_t i = 0; i < set.examples.size(); ++i) {
        const auto& e = set.examples[i];
        if (e.input.rows != in.h || e.input.cols != in.w || e.target.size() != per_target)
            throw InvalidInput("to_dataset: examples have inconsistent shapes");
        std::copy(e.input.data.begin(), e.input.data.end(), d.inputs.example(i));
        std::copy(e.target.data.begin(), e.target.data.end(), d.targets.begin() + static_cast<std::ptrdiff_t>(i * per_target));
        if (labels) d.labels.push_back(label_of.at(e.song_id));
    }
    return d;
}

void store_examples(const ExampleSet& set, const std::filesystem::path& path) {
    detail::ByteWriter w;
    w.bytes(kExstMagic, 4);
    w.put(kExampleVersion);
    w.put(static_cast<std::uint8_t>(set.input_kind));
    w.put(static_cast<std::uint8_t>(set.target_kind));
    w.put(static_cast<std::uint32_t>(set.examples.size()));
    const std::size_t n = set.examples.size();
    const std::uint32_t ir = n ? static_cast<std::uint32_t>(set.examples[0].input.rows) : 0;
    const std::uint32_t ic = n ? static_cast<std::uint32_t>(set.examples[0].input.cols) : 0;
    const std::uint32_t tr = n ? static_cast<std::uint32_t>(set.examples[0].target.rows) : 0;
    const std::uint32_t tc = n ? static_cast<std::uint32_t>(set.examples[0].target.cols) : 0;
    w.put(ir);
    w.put(ic);
    w.put(tr);
    w.put(tc);
    for (const auto& e : set.examples) {
        if (e.input.rows != ir || e.input.cols != ic || e.target.rows != tr || e.target.cols != tc)
            throw InvalidInput("store_examples: examples have inconsistent shapes");
        w.put(e.song_id);
        w.put(e.participant_id);
        w.put(e.second_index);
        w.put(e.chunk_index);
        w.array(std::span<const float>(e.input.data));
        w.array(std::span<const float>(e.target.data));
    }
    w.put(detail::crc32_of(w.buf.data(), w.buf.size()));
    detail::write_file(path, w.buf);
}

ExampleSet load_examples(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path);
    if (bytes.size() < 4 + 3 + 4 + 16 + 4) throw FormatError("example set truncated", bytes.size());
    if (std::memcmp(bytes.data(), kExstMagic, 4) != 0) throw FormatError("example set: bad magic", 0);
    if (bytes[4] != kExampleVersion)
        throw UnsupportedVersion("example set version " + std::to_string(bytes[4]) + " (expected 1)");
    const std::size_t body = bytes.size() - 4;
    std::uint32_t stored;
    std::memcpy(&stored, bytes.data() + body, 4);
    if (stored != detail::crc32_of(bytes.data(), body)) throw FormatError("example set: CRC32 mismatch", body);

    detail::ByteReader r(std::span<const std::uint8_t>(bytes.data(), body), "example set");
    for (int i = 0; i < 5; ++i) r.get<std::uint8_t>("header");
    ExampleSet set;
    const auto ik = r.get<std::uint8_t>("input kind");
    const auto tk = r.get<std::uint8_t>("target kind");
    if (ik > 1 || tk > 1) throw FormatError("example set: unknown representation kind", 5);
    set.input_kind = static_cast<eeg::InputKind>(ik);
    set.target_kind = static_cast<TargetKind>(tk);
    const auto n = r.get<std::uint32_t>("count");
    const auto ir = r.get<std::uint32_t>("input rows"), ic = r.get<std::uint32_t>("input cols");
    const auto tr = r.get<std::uint32_t>("target rows"), tc = r.get<std::uint32_t>("target cols");
    const std::size_t per = 12 + 4 * (static_cast<std::size_t>(ir) * ic + static_cast<std::size_t>(tr) * tc);
    r.need(per * n, "examples");
    set.examples.resize(n);
    for (auto& e : set.examples) {
        e.song_id = r.get<std::uint16_t>("song id");
        e.participant_id = r.get<std::uint16_t>("participant id");
        e.second_index = r.get<std::uint32_t>("second index");
        e.chunk_index = r.get<std::uint32_t>("chunk index");
        e.input = MatrixF(ir, ic);
        r.array(std::span<float>(e.input.data), "input");
        e.target = MatrixF(tr, tc);
        r.array(std::span<float>(e.target.data), "target");
    }
    if (r.remaining() != 0) throw FormatError("example set: trailing bytes", r.pos());
    return set;
}

}  // namespace cortical::data
