#pragma once

// Glue between the dataset, model and inversion stages used by the command
// line tool: corpus loading, model-output images and listening-test clip
// selection.

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "cortical/dataset.hpp"
#include "cortical/inversion.hpp"

namespace cortical::pipeline {

/// Every *.eegb file in `dir`, in file-name order. IoError when there are none.
std::vector<data::Recording> load_corpus(const std::filesystem::path& dir);

/// Infers the input and target representations from a model's shapes.
std::pair<eeg::InputKind, nn::TargetKind> model_kinds(nn::Sequential<float>& model);

/// Model output for each example, reshaped to frames x bins.
std::vector<MatrixF> predict_images(nn::Sequential<float>& model, const data::ExampleSet& set);

/// One 5 s test chunk of one recording.
struct ChunkKey {
    std::uint16_t participant_id = 0;
    std::uint16_t song_id = 0;
    std::uint32_t chunk_index = 0;
    std::uint32_t start_second() const { return chunk_index * 5; }
    auto operator<=>(const ChunkKey&) const = default;
};

/// Groups a test set into complete 5-example chunks (indices into the set,
/// in second order). Incomplete chunks are dropped.
std::map<ChunkKey, std::vector<std::size_t>> test_chunks(const data::ExampleSet& set);

/// Picks the 48-clip listening pool: the first four songs, four chunks per
/// song and third of the song, spread round-robin over participants.
/// PlanningError when some (song, third) has fewer than four test chunks.
std::vector<ChunkKey> select_pool(const std::vector<ChunkKey>& available, std::uint64_t seed);

/// The five seconds of stimulus audio that `start_second` of the usable region covers.
std::vector<float> original_excerpt(const data::Recording& rec, std::uint32_t start_second);

/// Inverts one test chunk from model outputs.
inversion::AudioClip invert_chunk(const ChunkKey& key, const std::vector<std::size_t>& indices,
                                  const data::ExampleSet& set, const std::vector<MatrixF>& outputs,
                                  const inversion::InversionConfig& cfg);

}  // namespace cortical::pipeline
