// Acceptance run: one PASS/FAIL line per headline criterion.
//
// Exit status is 0 when every criterion ran to completion, whatever its
// verdict, so ctest tracks crashes while the verdicts stay visible in the
// log. `--strict` makes any FAIL exit 1. `--only <substring>` runs a subset.
// `--report <path>` also writes the verdict lines to a file.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>

#include "oracles.hpp"

#include "cortical/abx.hpp"
#include "cortical/dataset.hpp"
#include "cortical/dsp.hpp"
#include "cortical/inversion.hpp"
#include "cortical/metrics.hpp"
#include "cortical/nn/checkpoint.hpp"
#include "cortical/nn/gradcheck.hpp"
#include "cortical/nn/model.hpp"
#include "cortical/nn/train.hpp"

using namespace cortical;

namespace {

// Desk-scale settings for the two training criteria.
constexpr std::uint64_t kSeed = 7;
constexpr std::size_t kOverfitExamples = 8;
constexpr std::size_t kOverfitEpochs = 500;
constexpr std::size_t kOverfitFilters = 2;
constexpr std::size_t kE2eFilters = 2;
constexpr std::size_t kE2eEpochs = 100;
constexpr std::size_t kClassifierEpochs = 20;
// Linear outputs are 8x wider, so the soft mel/linear comparison uses a
// shorter classifier run on both sides.
constexpr std::size_t kSoftClassifierEpochs = 5;

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int prec = 4) {
    std::ostringstream s;
    s << std::setprecision(prec) << v;
    return s.str();
}

std::vector<double> random_signal(std::size_t n, std::uint64_t seed) { return oracle::random_vector(n, seed, -1.0, 1.0); }

/// One second of a synthetic song, as doubles.
std::vector<double> song_second(std::uint16_t song, std::size_t second) {
    const auto audio = data::synth_song(song, kSeed);
    return {audio.begin() + static_cast<std::ptrdiff_t>(second * 22050),
            audio.begin() + static_cast<std::ptrdiff_t>((second + 1) * 22050)};
}

// ---------------------------------------------------------------------------

Verdict shape_conformance() {
    auto m = nn::build_regressor(eeg::InputKind::psd, nn::TargetKind::mel, 1);
    // Input/Output rows of the reference layer table, in order.
    const std::vector<std::pair<nn::LayerKind, nn::Shape>> expected = {
        {nn::LayerKind::conv2d, {63, 125, 8}},   {nn::LayerKind::batchnorm, {63, 125, 8}},
        {nn::LayerKind::relu, {63, 125, 8}},     {nn::LayerKind::dropout, {63, 125, 8}},
        {nn::LayerKind::conv2d, {63, 125, 16}},  {nn::LayerKind::batchnorm, {63, 125, 16}},
        {nn::LayerKind::relu, {63, 125, 16}},    {nn::LayerKind::dropout, {63, 125, 16}},
        {nn::LayerKind::conv2d, {63, 125, 32}},  {nn::LayerKind::batchnorm, {63, 125, 32}},
        {nn::LayerKind::relu, {63, 125, 32}},    {nn::LayerKind::dropout, {63, 125, 32}},
        {nn::LayerKind::conv2d, {63, 125, 64}},  {nn::LayerKind::batchnorm, {63, 125, 64}},
        {nn::LayerKind::relu, {63, 125, 64}},    {nn::LayerKind::dropout, {63, 125, 64}},
        {nn::LayerKind::conv2d, {32, 63, 128}},  {nn::LayerKind::batchnorm, {32, 63, 128}},
        {nn::LayerKind::relu, {32, 63, 128}},    {nn::LayerKind::dropout, {32, 63, 128}},
        {nn::LayerKind::maxpool, {17, 32, 128}}, {nn::LayerKind::flatten, {1, 1, 69632}},
        {nn::LayerKind::dense, {1, 1, 128}},     {nn::LayerKind::batchnorm, {1, 1, 128}},
        {nn::LayerKind::relu, {1, 1, 128}},
        {nn::LayerKind::dropout, {1, 1, 128}},   {nn::LayerKind::dense, {1, 1, 5632}},
        {nn::LayerKind::reshape, {44, 128, 1}},
    };
    if (m.input_shape() != nn::Shape{63, 125, 1}) return {false, "input shape"};
    if (m.size() != expected.size())
        return {false, std::to_string(m.size()) + " layers, expected " + std::to_string(expected.size())};
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const auto& l = m.layer(i);
        const auto s = l.output_shape();
        if (l.kind() != expected[i].first || s != expected[i].second)
            return {false, "layer " + std::to_string(i) + " (" + nn::to_string(l.kind()) + ") outputs " +
                               std::to_string(s.h) + "x" + std::to_string(s.w) + "x" + std::to_string(s.c)};
    }
    return {true, "28 layers, 63x125x1 -> 17x32x128 -> 69632 -> 128 -> 5632 -> 44x128"};
}

Verdict representation_shapes() {
    eeg::EegEpoch epoch;
    epoch.data = MatrixD(125, 125);
    epoch.data.data = oracle::random_vector(epoch.data.size(), 3, -20.0, 20.0);
    const auto raw = eeg::raw_image(epoch), psd = eeg::psd_image(epoch);
    const auto x = song_second(1, 10);
    const auto mel = data::target_spectrogram(x, nn::TargetKind::mel, 0.0);
    const auto lin = data::target_spectrogram(x, nn::TargetKind::linear, 0.0);
    std::ostringstream d;
    d << "raw " << raw.data.rows << "x" << raw.data.cols << ", psd " << psd.data.rows << "x" << psd.data.cols << ", mel "
      << mel.data.rows << "x" << mel.data.cols << ", linear " << lin.data.rows << "x" << lin.data.cols;
    bool ok = raw.data.rows == 125 && raw.data.cols == 125 && psd.data.rows == 63 && psd.data.cols == 125 &&
              mel.data.rows == 44 && mel.data.cols == 128 && lin.data.rows == 44 && lin.data.cols == 1025;
    // The four regressors agree with the image shapes.
    for (auto in : {eeg::InputKind::raw, eeg::InputKind::psd})
        for (auto tg : {nn::TargetKind::mel, nn::TargetKind::linear}) {
            nn::TrunkOptions o = nn::default_regressor_options(in);
            o.base_filters = 1;
            auto m = nn::build_regressor(in, tg, 1, o);
            const auto [h, w] = eeg::input_shape(in);
            ok = ok && m.input_shape() == nn::Shape{h, w, 1} && m.output_shape() == nn::target_shape(tg);
        }
    return {ok, d.str()};
}

Verdict gradient_audit() {
    const std::vector<std::pair<nn::LayerSpec, nn::Shape>> cases = {
        {nn::LayerSpec::conv(3, 4, 1), {6, 7, 2}},  {nn::LayerSpec::conv(2, 4, 2), {7, 9, 3}},
        {nn::LayerSpec::batchnorm(), {3, 4, 3}},    {nn::LayerSpec::relu(), {4, 4, 2}},
        {nn::LayerSpec::maxpool(), {5, 7, 2}},      {nn::LayerSpec::maxpool(std::pair<std::size_t, std::size_t>{4, 4}), {5, 7, 2}},
        {nn::LayerSpec::dropout(0.3), {3, 3, 4}},   {nn::LayerSpec::flatten(), {3, 4, 2}},
        {nn::LayerSpec::dense(7), {1, 1, 11}},      {nn::LayerSpec::reshape({4, 6, 1}), {1, 1, 24}},
    };
    double worst = 0.0;
    std::string worst_kind;
    std::size_t checked = 0;
    for (const auto& [spec, shape] : cases)
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto r = nn::gradient_check(spec, shape, 3, 100 + seed);
            checked += r.checked;
            if (r.checked == 0) return {false, std::string(nn::to_string(spec.kind)) + " checked nothing"};
            if (r.max_rel_error >= worst) worst = r.max_rel_error, worst_kind = nn::to_string(spec.kind);
        }
    return {worst < 1e-4, "8 layer kinds x 5 tensors, " + std::to_string(checked) + " derivatives, max rel err " +
                              fmt(worst, 3) + " (" + worst_kind + ")"};
}

Verdict dsp_round_trips() {
    double istft_err = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto x = random_signal(4000 + 517 * s, s);
        const auto y = dsp::istft(dsp::stft(x), {});
        if (y.size() != x.size()) return {false, "istft length"};
        for (std::size_t i = 0; i < x.size(); ++i) istft_err = std::max(istft_err, std::abs(x[i] - y[i]));
    }

    // Target normalisation and denormalisation above the floor.
    MatrixD p(44, 128);
    p.data = oracle::random_vector(p.size(), 5, -9.0, 0.0);
    for (auto& v : p.data) v = std::pow(10.0, v);
    double norm_err = 0.0;
    for (double ref : {40.0, 46.0, 52.0, 60.0}) {
        const auto db = inversion::denormalize(data::normalize_target(p, nn::TargetKind::mel, ref), 100.0, ref);
        for (std::size_t f = 0; f < 44; ++f)
            for (std::size_t b = 0; b < 128; ++b)
                norm_err = std::max(norm_err, std::abs(db(b, f) - (10.0 * std::log10(p(f, b)) + ref)));
    }

    double db_err = 0.0;
    for (double v : p.data) {
        const double back = dsp::db_to_power(dsp::power_to_db(v, 0.5, -200.0), 0.5);
        db_err = std::max(db_err, std::abs(back - v) / v);
    }
    const bool ok = istft_err < 1e-6 && norm_err < 1e-9 && db_err < 1e-9;
    return {ok, "istft max err " + fmt(istft_err, 3) + ", normalise/denormalise " + fmt(norm_err, 3) +
                    " dB, dB/power rel " + fmt(db_err, 3)};
}

Verdict griffin_lim() {
    std::size_t improved = 0;
    double worst_ratio = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
        const auto x = song_second(static_cast<std::uint16_t>(1 + i % 4), 20 + 13 * i);
        const auto r = dsp::griffin_lim(dsp::stft(x).magnitude(), 60);
        const double ratio = r.residual.back() / r.residual.front();
        worst_ratio = std::max(worst_ratio, ratio);
        if (r.residual.back() < r.residual.front()) ++improved;
    }
    std::vector<double> sine(22050);
    for (std::size_t t = 0; t < sine.size(); ++t) sine[t] = std::sin(2.0 * std::numbers::pi * 440.0 * t / 22050.0);
    const auto y = dsp::griffin_lim(dsp::stft(sine).magnitude(), 60, {}, 22050).signal;
    // The sine's bin at the analysis resolution: round(440 * 2048 / 22050) = 41.
    const auto P = dsp::stft(y).power();
    std::size_t peak = 1;
    std::vector<double> mean(P.cols, 0.0);
    for (std::size_t f = 0; f < P.rows; ++f)
        for (std::size_t b = 0; b < P.cols; ++b) mean[b] += P(f, b);
    for (std::size_t b = 1; b < P.cols; ++b)
        if (mean[b] > mean[peak]) peak = b;
    const auto expected = static_cast<std::size_t>(std::lround(440.0 * dsp::kFftSize / dsp::kAudioRate));
    // Fine-resolution peak of the whole second (1 Hz bins), reported only.
    std::size_t fine = 0;
    double best = -1.0;
    for (std::size_t k = 400; k <= 480; ++k) {
        std::complex<double> acc{};
        for (std::size_t t = 0; t < y.size(); ++t)
            acc += y[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t % y.size()) / y.size());
        if (std::abs(acc) > best) best = std::abs(acc), fine = k;
    }
    const bool ok = improved == 10 && peak == expected;
    return {ok, std::to_string(improved) + "/10 residuals fall (worst 60/1 ratio " + fmt(worst_ratio, 3) +
                    "), 440 Hz sine peaks at bin " + std::to_string(peak) + " (expected " + std::to_string(expected) +
                    " of 2048; " + std::to_string(fine) + " Hz at 1 Hz resolution)"};
}

Verdict mel_inversion() {
    const auto fb = dsp::mel_filterbank();
    double worst_rel = 0.0, worst_mel = 0.0;
    bool monotone = true;
    for (std::size_t i = 0; i < 10; ++i) {
        const auto P = dsp::stft(song_second(static_cast<std::uint16_t>(1 + i % 4), 30 + 17 * i)).power();
        const auto M = dsp::apply_mel(P, fb);
        const auto r = inversion::mel_to_linear_magnitude(M, fb, 200, true);
        for (std::size_t f = 0; f < r.residual.cols; ++f)
            for (std::size_t k = 1; k < r.residual.rows; ++k)
                if (r.residual(k, f) > r.residual(k - 1, f) + 1e-9 * r.residual(0, f)) monotone = false;
        MatrixD S(P.rows, P.cols);
        double e = 0.0, n = 0.0;
        for (std::size_t j = 0; j < S.size(); ++j) {
            S.data[j] = r.magnitude.data[j] * r.magnitude.data[j];
            e += (S.data[j] - P.data[j]) * (S.data[j] - P.data[j]);
            n += P.data[j] * P.data[j];
        }
        worst_rel = std::max(worst_rel, std::sqrt(e / n));
        const auto M2 = dsp::apply_mel(S, fb);
        double em = 0.0, nm = 0.0;
        for (std::size_t j = 0; j < M.size(); ++j) {
            em += (M2.data[j] - M.data[j]) * (M2.data[j] - M.data[j]);
            nm += M.data[j] * M.data[j];
        }
        worst_mel = std::max(worst_mel, std::sqrt(em / nm));
    }
    return {monotone && worst_rel < 0.1, "10 spectra: worst linear power rel err " + fmt(worst_rel, 3) +
                                              " (mel re-projection " + fmt(worst_mel, 3) + "), residual " +
                                              (monotone ? "monotone" : "NOT monotone")};
}

Verdict overfit_sanity() {
    const auto corpus = data::synth_corpus(1, 1, kSeed);
    auto sets = data::make_examples(corpus[0], eeg::InputKind::psd, nn::TargetKind::mel, data::split_chunks(), kSeed);
    sets.train.examples.resize(kOverfitExamples);
    const auto ds = data::to_dataset(sets.train);
    auto opts = nn::default_regressor_options(eeg::InputKind::psd);
    opts.base_filters = kOverfitFilters;
    auto model = nn::build_regressor(eeg::InputKind::psd, nn::TargetKind::mel, kSeed, opts);
    nn::TrainConfig cfg;
    cfg.epochs = kOverfitEpochs;
    cfg.batch_size = 32;
    cfg.seed = kSeed;
    cfg.patience = kOverfitEpochs;
    cfg.train_loss = nn::TrainLossMode::evaluated;
    cfg.stop_at_train_loss = 1e-3;
    const auto rep = nn::train(model, ds, ds, cfg);
    const double final_loss = rep.final_train_loss();
    return {final_loss < 1e-3, std::to_string(kOverfitExamples) + " examples, width " + std::to_string(kOverfitFilters) +
                                   ": train MSE " + fmt(final_loss, 3) + " after " + std::to_string(rep.epochs.size()) +
                                   " epochs"};
}

Verdict end_to_end() {
    const auto corpus = data::synth_corpus(4, 2, kSeed);
    std::ostringstream d;
    bool ok = true;
    double soft_mel = 0.0;
    for (auto target : {nn::TargetKind::mel, nn::TargetKind::linear}) {
        const auto sets = data::make_corpus_examples(corpus, eeg::InputKind::psd, target, kSeed);
        data::ExampleSet fit = sets.train, val = sets.train;
        fit.examples.clear();
        val.examples.clear();
        for (const auto& e : sets.train.examples) (e.chunk_index % 6 == 5 ? val : fit).examples.push_back(e);

        auto opts = nn::default_regressor_options(eeg::InputKind::psd);
        opts.base_filters = kE2eFilters;
        auto model = nn::build_regressor(eeg::InputKind::psd, target, kSeed, opts);
        metrics::ClassifyConfig cc;
        cc.seed = kSeed;
        cc.target = target;
        cc.epochs = kClassifierEpochs;
        cc.base_filters = kE2eFilters;

        if (target == nn::TargetKind::mel) {
            const auto untrained = metrics::classify_outputs(model, sets, cc);
            const bool chance = std::abs(untrained.accuracy - 0.25) <= 0.10;
            ok = ok && chance && untrained.untrained_regressor && untrained.leakage_free;
            d << "untrained " << fmt(100 * untrained.accuracy) << "%" << (chance ? "" : " (outside 25+-10)") << "; ";
        }
        nn::TrainConfig tc;
        tc.epochs = kE2eEpochs;
        tc.seed = kSeed;
        tc.patience = kE2eEpochs;
        const auto rep = nn::train(model, data::to_dataset(fit), data::to_dataset(val), tc);
        if (target == nn::TargetKind::mel) {
            const auto r = metrics::classify_outputs(model, sets, cc);
            ok = ok && r.leakage_free && r.accuracy > 0.60;
            d << "psd->mel " << fmt(100 * r.accuracy) << "% after " << rep.epochs.size() << " epochs (val MSE "
              << fmt(rep.best_val_loss, 3) << "); ";
        }
        cc.epochs = kSoftClassifierEpochs;
        const auto soft = metrics::classify_outputs(model, sets, cc);
        ok = ok && soft.leakage_free;
        if (target == nn::TargetKind::mel) {
            soft_mel = soft.accuracy;
        } else {
            d << "soft, " << kSoftClassifierEpochs << " classifier epochs: mel " << fmt(100 * soft_mel) << "% vs linear "
              << fmt(100 * soft.accuracy) << "%, mel >= linear " << (soft_mel >= soft.accuracy ? "holds" : "does not hold");
        }
    }
    return {ok, d.str()};
}

Verdict metrics_check() {
    std::size_t identity_ok = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        MatrixD a(44, 128);
        a.data = oracle::random_vector(a.size(), 1000 + s, 0.0, 1.0);
        if (metrics::ssi(a, a) == 1.0 && metrics::psnr(a, a) == metrics::kPsnrInfinite) ++identity_ok;
    }
    MatrixD a(44, 128);
    a.data = oracle::random_vector(a.size(), 77, 0.0, 0.9);
    MatrixD b = a;
    for (auto& v : b.data) v += 0.1;
    const double p = metrics::psnr(a, b);

    std::vector<MatrixF> targets, outputs;
    for (std::uint64_t s = 0; s < 12; ++s) {
        MatrixF t(44, 128);
        const auto v = oracle::random_vector(t.size(), 200 + s, 0.0, 1.0);
        std::copy(v.begin(), v.end(), t.data.begin());
        auto o = t;
        for (std::size_t f = 0; f < 44; ++f) o(f, 57) = 1.0f - o(f, 57);
        targets.push_back(t);
        outputs.push_back(o);
    }
    const auto prof = metrics::per_bin_profiles(nn::TargetKind::mel, targets, outputs);
    std::size_t perfect = 0;
    for (const auto& bp : prof)
        if (bp.bin_index != 57 && bp.ssi_summary.min == 1.0 && bp.psnr_summary.infinite == targets.size()) ++perfect;
    const bool isolated = prof.size() == 128 && perfect == 127 && prof[57].ssi_summary.max < 1.0;
    const bool ok = identity_ok == 100 && std::abs(p - 20.0) < 1e-9 && isolated;
    return {ok, std::to_string(identity_ok) + "/100 identities, psnr(+0.1) = " + fmt(p, 12) + " dB, " +
                    std::to_string(prof.size()) + " profiles, corrupted bin isolated: " + (isolated ? "yes" : "no")};
}

Verdict determinism() {
    const auto corpus = data::synth_corpus(1, 1, kSeed);
    const auto sets = data::make_examples(corpus[0], eeg::InputKind::psd, nn::TargetKind::mel, data::split_chunks(), kSeed);
    data::ExampleSet fit = sets.train, val = sets.train;
    fit.examples.clear();
    val.examples.clear();
    for (const auto& e : sets.train.examples) (e.chunk_index % 6 == 5 ? val : fit).examples.push_back(e);
    std::vector<std::vector<std::uint8_t>> ckpt;
    std::vector<std::string> report;
    for (int run = 0; run < 2; ++run) {
        auto opts = nn::default_regressor_options(eeg::InputKind::psd);
        opts.base_filters = 2;
        auto m = nn::build_regressor(eeg::InputKind::psd, nn::TargetKind::mel, kSeed, opts);
        nn::TrainConfig cfg;
        cfg.epochs = 2;
        cfg.seed = kSeed;
        const auto r = nn::train(m, data::to_dataset(fit), data::to_dataset(val), cfg);
        ckpt.push_back(nn::encode_checkpoint(m));
        report.push_back(r.table() + r.records());
    }
    const bool ok = ckpt[0] == ckpt[1] && report[0] == report[1];
    return {ok, "2 runs x 2 epochs: checkpoint " + std::string(ckpt[0] == ckpt[1] ? "identical" : "DIFFERS") + " (" +
                    std::to_string(ckpt[0].size()) + " bytes), report " +
                    (report[0] == report[1] ? "identical" : "DIFFERS")};
}

Verdict scoring_arithmetic() {
    abx::TrialPlan plan;
    for (std::size_t i = 0; i < 24; ++i) {
        abx::Trial t;
        t.trial_id = "m" + std::to_string(i);
        t.song_id = static_cast<std::uint16_t>(1 + i % 4);
        t.correct = i % 3 ? abx::Side::A : abx::Side::B;
        plan.main.push_back(t);
    }
    auto rate = [&](std::size_t correct) {
        abx::SessionRecord r;
        for (std::size_t i = 0; i < 24; ++i) {
            const auto& t = plan.main[i];
            const auto wrong = t.correct == abx::Side::A ? abx::Side::B : abx::Side::A;
            r.responses.push_back({t.trial_id, i < correct ? t.correct : wrong, {1, 1, 1}, 0, 0, false});
        }
        r.completed_ms = 1;
        return abx::format_rate(abx::score_session(r, plan).success_rate);
    };
    const auto hi = rate(23), lo = rate(16), full = rate(24);
    return {hi == "95.83" && lo == "66.67" && full == "100.00",
            "23/24 -> " + hi + "%, 16/24 -> " + lo + "%, 24/24 -> " + full + "%"};
}

Verdict plan_audit() {
    std::vector<abx::ClipInfo> clips;
    std::vector<abx::OriginalInfo> originals;
    const std::uint32_t starts[] = {15, 35, 95, 135, 175, 215};
    for (std::uint16_t song = 1; song <= 4; ++song)
        for (auto t : starts) {
            originals.push_back({"x" + std::to_string(song) + "_" + std::to_string(t), song, t});
            for (std::uint16_t p = 1; p <= 2; ++p)
                clips.push_back({"c" + std::to_string(p) + "_" + std::to_string(song) + "_" + std::to_string(t), song, p, t});
        }
    std::size_t clean = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed)
        if (abx::audit_plans(abx::generate_plans(clips, originals, seed), clips, originals).empty()) ++clean;

    auto missing = clips;
    std::erase_if(missing, [](const abx::ClipInfo& c) { return c.song_id == 3; });
    bool rejected = false;
    try {
        abx::generate_plans(missing, originals, 1);
    } catch (const PlanningError&) {
        rejected = true;
    }
    return {clean == 50 && rejected, std::to_string(clean) + "/50 seeds pass the auditor; pool missing a song " +
                                         (rejected ? "raises PlanningError" : "was ACCEPTED")};
}

}  // namespace

int main(int argc, char** argv) {
    bool strict = false;
    std::string only, report_path;
    for (int i = 1; i < argc; ++i) {
        if (!std::strcmp(argv[i], "--strict")) strict = true;
        else if (!std::strcmp(argv[i], "--only") && i + 1 < argc) only = argv[++i];
        else if (!std::strcmp(argv[i], "--report") && i + 1 < argc) report_path = argv[++i];
    }
    std::ofstream report;
    if (!report_path.empty()) report.open(report_path);
    auto emit = [&](const std::string& line) {
        std::cout << line << std::endl;
        if (report) report << line << std::endl;
    };
    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
        {"shape conformance", shape_conformance},
        {"representation shapes", representation_shapes},
        {"gradient audit", gradient_audit},
        {"dsp round trips", dsp_round_trips},
        {"griffin-lim", griffin_lim},
        {"mel inversion", mel_inversion},
        {"overfit sanity", overfit_sanity},
        {"end-to-end learnability", end_to_end},
        {"metrics", metrics_check},
        {"determinism", determinism},
        {"scoring arithmetic", scoring_arithmetic},
        {"trial-plan audit", plan_audit},
    };
    std::size_t passed = 0, run = 0;
    for (const auto& [name, fn] : criteria) {
        if (!only.empty() && std::string(name).find(only) == std::string::npos) continue;
        ++run;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            emit(std::string("ERROR ") + name + ": " + e.what());
            return 2;
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (v.pass) ++passed;
        emit((v.pass ? "PASS " : "FAIL ") + std::string(name) + ": " + v.detail + " [" + fmt(secs, 3) + " s]");
    }
    emit(std::to_string(passed) + "/" + std::to_string(run) + " criteria passed");
    return strict && passed != run ? 1 : 0;
}
