#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cortical/common.hpp"
#include "cortical/eeg_features.hpp"
#include "cortical/nn/model.hpp"
#include "cortical/nn/train.hpp"

namespace cortical::data {

using nn::TargetKind;

inline constexpr double kChunkSeconds = 5.0;
inline constexpr std::size_t kChunksPerRecording = 48;  // first 240 s
inline constexpr double kUsableSeconds = 240.0;
inline constexpr double kMaxDb = 100.0;

/// One participant listening to one song.
struct Recording {
    std::uint16_t participant_id = 0;
    std::uint16_t song_id = 0;
    float eeg_rate = static_cast<float>(eeg::kEegRate);
    float audio_rate = 22050.0f;
    MatrixF eeg;               // channels x samples, microvolts
    std::vector<float> audio;  // mono, [-1, 1]
    /// EEG time (seconds) at which audio sample 0 plays.
    float onset_offset = 0.0f;

    bool operator==(const Recording&) const = default;
};

// ---------------------------------------------------------------------------
// EEGB container

inline constexpr std::uint8_t kContainerVersion = 1;

std::vector<std::uint8_t> encode_container(const Recording& rec);
/// FormatError (with byte offset) for bad magic, truncation or non-finite
/// payload values; UnsupportedVersion for versions other than 1.
Recording decode_container(std::span<const std::uint8_t> bytes);

void store_container(const Recording& rec, const std::filesystem::path& path);
Recording load_container(const std::filesystem::path& path);

/// Conventional file name, e.g. "p01_s03.eegb".
std::string container_name(const Recording& rec);

// ---------------------------------------------------------------------------
// Segmentation

enum class ChunkRole : std::uint8_t { train, test };

/// Repeating cycle of round(ratio * q) train chunks followed by test chunks,
/// where q is the smallest cycle length (<= 20) that expresses the ratio
/// exactly. 0.75 gives [train, train, train, test]. A trailing partial cycle
/// follows the same pattern (it is truncated, not rebalanced).
std::vector<ChunkRole> split_chunks(std::size_t n_chunks = kChunksPerRecording, double ratio = 0.75);

/// Normalised target spectrogram for one second of audio.
struct SpectroImage {
    TargetKind kind = TargetKind::mel;
    MatrixD data;  // frames x bins, values in [0, 1]
    double ref_db = 0.0;
    double max_db = kMaxDb;
};

/// Power spectrogram of one second (mel-projected for the mel kind).
MatrixD target_power(std::span<const double> audio_second, TargetKind kind);

/// dB = 10 log10(max(p, 1e-10) / peak) + ref_db, then
/// norm = (dB - ref_db + max_db) / max_db clipped to [0, 1].
/// `peak` is the power that maps to ref_db (the song's peak during training).
SpectroImage normalize_target(const MatrixD& power, TargetKind kind, double ref_db, double max_db = kMaxDb,
                              double peak = 1.0);

/// target_power followed by normalize_target. The input must be exactly one
/// second (22050 samples).
SpectroImage target_spectrogram(std::span<const double> audio_second, TargetKind kind, double ref_db,
                                double max_db = kMaxDb, double peak = 1.0);

struct ExamplePair {
    MatrixF input;   // InputImage data
    MatrixF target;  // SpectroImage data
    std::uint16_t song_id = 0;
    std::uint16_t participant_id = 0;
    std::uint32_t second_index = 0;  // seconds from the start of the usable region
    std::uint32_t chunk_index = 0;

    bool operator==(const ExamplePair&) const = default;
};

struct ExampleSet {
    eeg::InputKind input_kind = eeg::InputKind::psd;
    TargetKind target_kind = TargetKind::mel;
    std::vector<ExamplePair> examples;

    bool operator==(const ExampleSet&) const = default;
};

struct SplitSets {
    ExampleSet train;
    ExampleSet test;
};

/// Audio time (seconds) where the 240 s usable region starts, and the matching
/// EEG sample index. Throws AlignmentError when either stream is shorter than
/// 240 s after alignment or the rates are not whole samples per second.
struct Alignment {
    double audio_start_s = 0.0;
    std::size_t eeg_start = 0;
    std::size_t audio_start = 0;
};
Alignment align(const Recording& rec);

/// Cuts the recording into 48 five-second chunks, assigns roles and emits five
/// one-second examples per chunk. Targets are normalised with ref_db 0 against
/// the recording's peak target power. The training set is shuffled with a
/// generator seeded from (seed, participant, song); the test set keeps time order.
SplitSets make_examples(const Recording& rec, eeg::InputKind input, TargetKind target,
                        const std::vector<ChunkRole>& roles, std::uint64_t seed);

/// make_examples over a corpus; the concatenated training set is shuffled once more.
SplitSets make_corpus_examples(const std::vector<Recording>& corpus, eeg::InputKind input, TargetKind target,
                               std::uint64_t seed, double ratio = 0.75);

/// [start, end) seconds of an example within its recording's usable region.
inline std::pair<std::uint32_t, std::uint32_t> interval(const ExamplePair& e) {
    return {e.second_index, e.second_index + 1};
}

/// Stacks inputs (n x H x W x 1) and flat targets for the trainer. With
/// `labels`, song ids are mapped to dense class indices in ascending id order.
nn::Dataset to_dataset(const ExampleSet& set, bool labels = false);

/// Sorted distinct song ids of a set.
std::vector<std::uint16_t> song_ids(const ExampleSet& set);

// Binary example-set files ("EXST"), used by the prepare command.
void store_examples(const ExampleSet& set, const std::filesystem::path& path);
ExampleSet load_examples(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic corpus

struct SynthOptions {
    double duration_s = 242.0;
    double onset_offset_s = 0.4;
    std::size_t channels = eeg::kChannels;
    /// Standard deviation of the pink background, microvolts.
    double noise_uv = 6.0;
    /// Peak amplitude of the embedded envelope response, microvolts.
    double response_uv = 10.0;
};

/// Beat (envelope) frequency of a synthetic song, Hz.
double synth_beat_hz(std::uint16_t song_id);

/// Audio of one synthetic song.
std::vector<float> synth_song(std::uint16_t song_id, std::uint64_t seed, const SynthOptions& opts = {});

/// n_songs x n_participants recordings, participant-major order within each
/// song. Bit-identical for identical arguments.
std::vector<Recording> synth_corpus(std::size_t n_songs, std::size_t n_participants, std::uint64_t seed,
                                    const SynthOptions& opts = {});

}  // namespace cortical::data
