#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "cortical/dataset.hpp"
#include "cortical/dsp.hpp"

namespace cortical::data {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Per-song timbre, drawn once from the song id.
struct Voice {
    double root_hz;
    int harmonics;
    double decay;       // envelope time constant as a fraction of the beat period
    double noise_gain;  // relative level of the filtered noise layer
    double noise_pole;  // one-pole low-pass coefficient
};

Voice voice_for(std::uint16_t song_id, std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, 0x50C6, song_id));
    Voice v;
    const int semitone = static_cast<int>((song_id * 5u) % 12u);
    v.root_hz = 196.0 * std::pow(2.0, semitone / 12.0) * (song_id % 2 ? 1.0 : 1.5);
    v.harmonics = 2 + static_cast<int>(song_id % 4u);
    v.decay = uniform(rng, 0.18, 0.35);
    v.noise_gain = uniform(rng, 0.05, 0.25);
    v.noise_pole = uniform(rng, 0.5, 0.95);
    return v;
}

// Audio-rate amplitude envelope: one decaying pulse per beat.
double pulse(double t, double beat_hz, double decay) {
    const double period = 1.0 / beat_hz;
    const double local = std::fmod(t, period);
    return std::exp(-local / (decay * period));
}

// Pink-ish noise via Kellet's economy filter, roughly unit variance.
class PinkNoise {
public:
    explicit PinkNoise(std::uint64_t seed) : rng_(seed) {}
    double next() {
        const double w = normal01(rng_);
        b0_ = 0.99765 * b0_ + w * 0.0990460;
        b1_ = 0.96300 * b1_ + w * 0.2965164;
        b2_ = 0.57000 * b2_ + w * 1.0526913;
        return (b0_ + b1_ + b2_ + w * 0.1848) * 0.35;
    }

private:
    std::mt19937_64 rng_;
    double b0_ = 0, b1_ = 0, b2_ = 0;
};

}  // namespace

double synth_beat_hz(std::uint16_t song_id) { return 1.0 + static_cast<double>(song_id); }

std::vector<float> synth_song(std::uint16_t song_id, std::uint64_t seed, const SynthOptions& opts) {
    if (!(opts.duration_s > 0.0)) throw InvalidInput("synth_song: duration must be positive");
    const Voice v = voice_for(song_id, seed);
    const double beat = synth_beat_hz(song_id);
    const double rate = dsp::kAudioRate;
    const auto n = static_cast<std::size_t>(std::llround(opts.duration_s * rate));
    const auto n_beats = static_cast<std::size_t>(std::ceil(opts.duration_s * beat)) + 1;

    // Melody: a pentatonic degree and octave per beat.
    static constexpr int kScale[] = {0, 2, 4, 7, 9};
    std::mt19937_64 rng(derive_seed(seed, 0x3E10, song_id));
    std::vector<double> note_hz(n_beats);
    for (auto& f : note_hz) {
        const int degree = kScale[rng() % 5];
        const int octave = static_cast<int>(rng() % 2);
        f = v.root_hz * std::pow(2.0, degree / 12.0 + octave);
    }

    std::vector<double> x(n);
    std::mt19937_64 noise_rng(derive_seed(seed, 0x401E, song_id));
    double lp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate;
        const auto b = std::min(static_cast<std::size_t>(t * beat), n_beats - 1);
        const double local = t - static_cast<double>(b) / beat;
        const double env = pulse(t, beat, v.decay);
        double s = 0.0;
        for (int h = 1; h <= v.harmonics; ++h) {
            const double f = note_hz[b] * h;
            if (f >= rate / 2) break;
            s += std::sin(kTwoPi * f * local) / h;
        }
        lp = v.noise_pole * lp + (1.0 - v.noise_pole) * (2.0 * uniform01(noise_rng) - 1.0);
        x[i] = env * (s + v.noise_gain * 8.0 * lp);
    }

    double peak = 0.0;
    for (double s : x) peak = std::max(peak, std::abs(s));
    std::vector<float> out(n);
    const double g = peak > 0.0 ? 0.9 / peak : 0.0;
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(x[i] * g);
    return out;
}

std::vector<Recording> synth_corpus(std::size_t n_songs, std::size_t n_participants, std::uint64_t seed,
                                    const SynthOptions& opts) {
    if (n_songs == 0 || n_participants == 0) throw InvalidInput("synth_corpus: need at least one song and participant");
    if (n_songs > 65535 || n_participants > 65535) throw InvalidInput("synth_corpus: too many songs or participants");
    if (opts.channels == 0) throw InvalidInput("synth_corpus: need at least one channel");

    const double eeg_rate = eeg::kEegRate;
    const double block = dsp::kAudioRate / eeg_rate;  // 176.4 audio samples per EEG sample
    const auto n_eeg = static_cast<std::size_t>(std::ceil((opts.onset_offset_s + opts.duration_s) * eeg_rate));

    std::vector<Recording> corpus;
    corpus.reserve(n_songs * n_participants);
    for (std::size_t si = 0; si < n_songs; ++si) {
        const auto song_id = static_cast<std::uint16_t>(si + 1);
        const auto audio = synth_song(song_id, seed, opts);

        // RMS envelope of the audio on the EEG clock (audio time = eeg time - offset).
        std::vector<double> envelope(n_eeg, 0.0);
        for (std::size_t k = 0; k < n_eeg; ++k) {
            const double t = static_cast<double>(k) / eeg_rate - opts.onset_offset_s;
            if (t < 0.0) continue;
            const double centre = t * dsp::kAudioRate;
            const auto lo = static_cast<long>(std::floor(centre - block / 2));
            const auto hi = static_cast<long>(std::ceil(centre + block / 2));
            double acc = 0.0;
            long cnt = 0;
            for (long i = std::max(0L, lo); i < std::min<long>(hi, static_cast<long>(audio.size())); ++i, ++cnt)
                acc += static_cast<double>(audio[static_cast<std::size_t>(i)]) * audio[static_cast<std::size_t>(i)];
            envelope[k] = cnt ? std::sqrt(acc / static_cast<double>(cnt)) : 0.0;
        }
        double env_peak = 0.0;
        for (double e : envelope) env_peak = std::max(env_peak, e);
        if (env_peak > 0.0)
            for (double& e : envelope) e /= env_peak;

        for (std::size_t pi = 0; pi < n_participants; ++pi) {
            const auto participant = static_cast<std::uint16_t>(pi + 1);
            std::mt19937_64 rng(derive_seed(seed, participant, song_id));
            Recording rec;
            rec.participant_id = participant;
            rec.song_id = song_id;
            rec.onset_offset = static_cast<float>(opts.onset_offset_s);
            rec.audio = audio;
            rec.eeg = MatrixF(opts.channels, n_eeg);

            // Cortical response lags the stimulus by 80-160 ms, then a two-pole
            // smoother keeps it in the EEG band and removes the mean.
            const auto lag = static_cast<std::size_t>(std::lround(uniform(rng, 0.08, 0.16) * eeg_rate));
            std::vector<double> response(n_eeg, 0.0);
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t k = 0; k < n_eeg; ++k) {
                const double in = k >= lag ? envelope[k - lag] : 0.0;
                s1 += 0.5 * (in - s1);
                s2 += 0.5 * (s1 - s2);
                response[k] = s2;
            }
            double mean = 0.0;
            for (double r : response) mean += r;
            mean /= static_cast<double>(n_eeg);
            for (double& r : response) r -= mean;

            for (std::size_t ch = 0; ch < opts.channels; ++ch) {
                const double gain = normal01(rng);
                PinkNoise noise(derive_seed(seed, participant, (static_cast<std::uint64_t>(song_id) << 16) | ch));
                auto row = rec.eeg.row(ch);
                for (std::size_t k = 0; k < n_eeg; ++k)
                    row[k] = static_cast<float>(gain * opts.response_uv * response[k] + opts.noise_uv * noise.next());
            }
            corpus.push_back(std::move(rec));
        }
    }
    return corpus;
}

}  // namespace cortical::data
