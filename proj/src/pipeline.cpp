#include "cortical/pipeline.hpp"

#include <algorithm>
#include <random>

#include "cortical/nn/train.hpp"

namespace cortical::pipeline {

std::vector<data::Recording> load_corpus(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    std::error_code ec;
    for (const auto& e : std::filesystem::directory_iterator(dir, ec))
        if (e.is_regular_file() && e.path().extension() == ".eegb") files.push_back(e.path());
    if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
    if (files.empty()) throw IoError("no .eegb recordings in " + dir.string());
    std::sort(files.begin(), files.end());
    std::vector<data::Recording> out;
    for (const auto& f : files) out.push_back(data::load_container(f));
    return out;
}

std::pair<eeg::InputKind, nn::TargetKind> model_kinds(nn::Sequential<float>& model) {
    const auto in = model.input_shape();
    std::pair<eeg::InputKind, nn::TargetKind> k;
    bool found = false;
    for (auto kind : {eeg::InputKind::raw, eeg::InputKind::psd}) {
        const auto [h, w] = eeg::input_shape(kind);
        if (in.h == h && in.w == w && in.c == 1) k.first = kind, found = true;
    }
    if (!found) throw InvalidInput("model input shape matches neither raw nor psd images");
    const std::size_t out = model.output_shape().size();
    if (out == nn::target_shape(nn::TargetKind::mel).size())
        k.second = nn::TargetKind::mel;
    else if (out == nn::target_shape(nn::TargetKind::linear).size())
        k.second = nn::TargetKind::linear;
    else
        throw InvalidInput("model output size " + std::to_string(out) + " matches neither target kind");
    return k;
}

std::vector<MatrixF> predict_images(nn::Sequential<float>& model, const data::ExampleSet& set) {
    const auto ds = data::to_dataset(set);
    const auto pred = nn::predict(model, ds.inputs);
    const auto shape = nn::target_shape(set.target_kind);
    if (pred.per_example() != shape.size()) throw InvalidInput("model output does not match the set's target kind");
    std::vector<MatrixF> out;
    for (std::size_t i = 0; i < pred.n; ++i) {
        MatrixF m(shape.h, shape.w);
        std::copy_n(pred.example(i), m.size(), m.data.begin());
        out.push_back(std::move(m));
    }
    return out;
}

std::map<ChunkKey, std::vector<std::size_t>> test_chunks(const data::ExampleSet& set) {
    std::map<ChunkKey, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < set.examples.size(); ++i) {
        const auto& e = set.examples[i];
        out[{e.participant_id, e.song_id, e.chunk_index}].push_back(i);
    }
    for (auto it = out.begin(); it != out.end();) {
        auto& v = it->second;
        std::sort(v.begin(), v.end(),
                  [&](std::size_t a, std::size_t b) { return set.examples[a].second_index < set.examples[b].second_index; });
        it = v.size() == inversion::kClipSeconds ? std::next(it) : out.erase(it);
    }
    return out;
}

std::vector<ChunkKey> select_pool(const std::vector<ChunkKey>& available, std::uint64_t seed) {
    std::vector<std::uint16_t> songs;
    for (const auto& k : available) songs.push_back(k.song_id);
    std::sort(songs.begin(), songs.end());
    songs.erase(std::unique(songs.begin(), songs.end()), songs.end());
    if (songs.size() < 4)
        throw PlanningError("listening pool needs four songs, the test set has " + std::to_string(songs.size()));
    songs.resize(4);

    std::mt19937_64 rng(derive_seed(seed, 0x9001));
    std::vector<ChunkKey> pool;
    for (const auto song : songs)
        for (int third = 0; third < 3; ++third) {
            std::map<std::uint16_t, std::vector<ChunkKey>> by_participant;
            std::size_t total = 0;
            for (const auto& k : available)
                if (k.song_id == song && std::min(2u, k.start_second() * 3 / 240) == static_cast<unsigned>(third) &&
                    k.start_second() + 5 <= 240) {
                    by_participant[k.participant_id].push_back(k);
                    ++total;
                }
            if (total < 4)
                throw PlanningError("listening pool: song " + std::to_string(song) + " has " + std::to_string(total) +
                                    " test chunks in third " + std::to_string(third) + ", need 4");
            for (auto& [p, v] : by_participant) {
                std::sort(v.begin(), v.end());
                cortical::shuffle(v.begin(), v.end(), rng);
            }
            std::size_t taken = 0;
            for (std::size_t round = 0; taken < 4; ++round)
                for (auto& [p, v] : by_participant)
                    if (round < v.size() && taken < 4) {
                        pool.push_back(v[round]);
                        ++taken;
                    }
        }
    return pool;
}

std::vector<float> original_excerpt(const data::Recording& rec, std::uint32_t start_second) {
    const auto a = data::align(rec);
    const std::size_t rate = static_cast<std::size_t>(rec.audio_rate);
    const std::size_t begin = a.audio_start + static_cast<std::size_t>(start_second) * rate;
    const std::size_t n = inversion::kClipSeconds * rate;
    if (begin + n > rec.audio.size()) throw InvalidInput("excerpt at " + std::to_string(start_second) + " s runs past the audio");
    return {rec.audio.begin() + static_cast<std::ptrdiff_t>(begin),
            rec.audio.begin() + static_cast<std::ptrdiff_t>(begin + n)};
}

inversion::AudioClip invert_chunk(const ChunkKey& key, const std::vector<std::size_t>& indices,
                                  const data::ExampleSet& set, const std::vector<MatrixF>& outputs,
                                  const inversion::InversionConfig& cfg) {
    std::vector<inversion::ClipSecond> seconds;
    for (const auto i : indices) {
        inversion::ClipSecond s;
        s.image.kind = set.target_kind;
        s.image.data = MatrixD(outputs[i].rows, outputs[i].cols);
        std::copy(outputs[i].data.begin(), outputs[i].data.end(), s.image.data.data.begin());
        s.participant_id = key.participant_id;
        s.song_id = key.song_id;
        s.second_index = set.examples[i].second_index;
        seconds.push_back(std::move(s));
    }
    return inversion::invert_clip(seconds, cfg);
}

}  // namespace cortical::pipeline
