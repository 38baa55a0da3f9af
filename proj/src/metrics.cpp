#include "cortical/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "cortical/nn/checkpoint.hpp"

namespace cortical::metrics {
namespace {

void check_finite(std::span<const double> v, const char* who) {
    for (double x : v)
        if (!std::isfinite(x)) throw InvalidInput(std::string(who) + ": non-finite value");
}

double ssim_term(double sa, double sb, double saa, double sbb, double sab, double n, double c1, double c2) {
    const double ma = sa / n, mb = sb / n;
    const double va = saa / n - ma * ma;
    const double vb = sbb / n - mb * mb;
    const double cov = sab / n - ma * mb;
    return ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

double quantile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

MatrixD to_double(const MatrixF& m, bool clip) {
    MatrixD d(m.rows, m.cols);
    for (std::size_t i = 0; i < m.size(); ++i) {
        const double v = m.data[i];
        d.data[i] = clip ? std::clamp(v, 0.0, 1.0) : v;
    }
    return d;
}

void check_pairs(const std::vector<MatrixF>& targets, const std::vector<MatrixF>& outputs) {
    if (targets.size() != outputs.size()) throw InvalidInput("metrics: target and output lists differ in length");
    for (std::size_t i = 0; i < targets.size(); ++i)
        if (targets[i].rows != outputs[i].rows || targets[i].cols != outputs[i].cols)
            throw InvalidInput("metrics: shape mismatch at example " + std::to_string(i));
}

}  // namespace

double ssi(const MatrixD& a, const MatrixD& b, std::size_t window, double dynamic_range) {
    if (a.rows != b.rows || a.cols != b.cols) throw InvalidInput("ssi: shape mismatch");
    if (window == 0 || a.rows < window || a.cols < window) throw InvalidInput("ssi: image smaller than the window");
    check_finite(a.data, "ssi");
    check_finite(b.data, "ssi");
    const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
    const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);

    // Summed-area tables of a, b, a^2, b^2 and ab.
    const std::size_t R = a.rows + 1, C = a.cols + 1;
    std::vector<double> t[5];
    for (auto& v : t) v.assign(R * C, 0.0);
    for (std::size_t r = 0; r < a.rows; ++r)
        for (std::size_t c = 0; c < a.cols; ++c) {
            const double x = a(r, c), y = b(r, c);
            const double vals[5] = {x, y, x * x, y * y, x * y};
            const std::size_t k = (r + 1) * C + c + 1;
            for (int s = 0; s < 5; ++s) t[s][k] = vals[s] + t[s][k - 1] + t[s][k - C] - t[s][k - C - 1];
        }
    auto box = [&](int s, std::size_t r, std::size_t c) {
        const auto& v = t[s];
        return v[(r + window) * C + c + window] - v[r * C + c + window] - v[(r + window) * C + c] + v[r * C + c];
    };

    const double n = static_cast<double>(window * window);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r + window <= a.rows; ++r)
        for (std::size_t c = 0; c + window <= a.cols; ++c, ++count)
            total += ssim_term(box(0, r, c), box(1, r, c), box(2, r, c), box(3, r, c), box(4, r, c), n, c1, c2);
    return total / static_cast<double>(count);
}

double ssi_1d(std::span<const double> a, std::span<const double> b, std::size_t window, double dynamic_range) {
    if (a.size() != b.size()) throw InvalidInput("ssi_1d: length mismatch");
    if (window == 0 || a.size() < window) throw InvalidInput("ssi_1d: signal shorter than the window");
    check_finite(a, "ssi_1d");
    check_finite(b, "ssi_1d");
    const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
    const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
    const double n = static_cast<double>(window);
    double total = 0.0;
    const std::size_t positions = a.size() - window + 1;
    for (std::size_t i = 0; i < positions; ++i) {
        double s[5] = {0, 0, 0, 0, 0};
        for (std::size_t k = i; k < i + window; ++k) {
            s[0] += a[k];
            s[1] += b[k];
            s[2] += a[k] * a[k];
            s[3] += b[k] * b[k];
            s[4] += a[k] * b[k];
        }
        total += ssim_term(s[0], s[1], s[2], s[3], s[4], n, c1, c2);
    }
    return total / static_cast<double>(positions);
}

double psnr(std::span<const double> a, std::span<const double> b, double max_value) {
    if (a.size() != b.size() || a.empty()) throw InvalidInput("psnr: shape mismatch");
    if (!(max_value > 0.0)) throw InvalidInput("psnr: max value must be positive");
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        se += d * d;
    }
    if (!std::isfinite(se)) throw InvalidInput("psnr: non-finite value");
    if (se == 0.0) return kPsnrInfinite;
    return 10.0 * std::log10(max_value * max_value / (se / static_cast<double>(a.size())));
}

double psnr(const MatrixD& a, const MatrixD& b, double max_value) {
    if (a.rows != b.rows || a.cols != b.cols) throw InvalidInput("psnr: shape mismatch");
    return psnr(std::span<const double>(a.data), std::span<const double>(b.data), max_value);
}

std::vector<QualityScore> score_examples(const std::vector<MatrixF>& targets, const std::vector<MatrixF>& outputs) {
    check_pairs(targets, outputs);
    std::vector<QualityScore> out(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto t = to_double(targets[i], false);
        const auto o = to_double(outputs[i], true);
        out[i] = {i, ssi(t, o), psnr(t, o)};
    }
    return out;
}

Summary summarize(std::vector<double> values) {
    Summary s;
    std::vector<double> finite;
    finite.reserve(values.size());
    for (double v : values) {
        if (std::isinf(v))
            ++s.infinite;
        else if (!std::isnan(v))
            finite.push_back(v);
    }
    s.count = finite.size();
    if (finite.empty()) return s;
    std::sort(finite.begin(), finite.end());
    double sum = 0.0;
    for (double v : finite) sum += v;
    s.mean = sum / static_cast<double>(finite.size());
    s.min = finite.front();
    s.max = finite.back();
    s.q1 = quantile(finite, 0.25);
    s.median = quantile(finite, 0.5);
    s.q3 = quantile(finite, 0.75);
    return s;
}

std::vector<BinProfile> per_bin_profiles(nn::TargetKind kind, const std::vector<MatrixF>& targets,
                                         const std::vector<MatrixF>& outputs) {
    if (kind != nn::TargetKind::mel) throw InvalidInput("per_bin_profiles: defined for mel targets only");
    check_pairs(targets, outputs);
    if (targets.empty()) throw InvalidInput("per_bin_profiles: no examples");
    const std::size_t frames = targets[0].rows, bins = targets[0].cols;
    for (const auto& t : targets)
        if (t.rows != frames || t.cols != bins) throw InvalidInput("per_bin_profiles: examples differ in shape");

    std::vector<BinProfile> profiles(bins);
    std::vector<double> ts(frames), os(frames);
    for (std::size_t bin = 0; bin < bins; ++bin) {
        auto& p = profiles[bin];
        p.bin_index = bin;
        p.ssi.reserve(targets.size());
        p.psnr.reserve(targets.size());
        for (std::size_t e = 0; e < targets.size(); ++e) {
            for (std::size_t f = 0; f < frames; ++f) {
                ts[f] = targets[e](f, bin);
                os[f] = std::clamp(static_cast<double>(outputs[e](f, bin)), 0.0, 1.0);
            }
            p.ssi.push_back(ssi_1d(ts, os));
            p.psnr.push_back(psnr(ts, os));
        }
        p.ssi_summary = summarize(p.ssi);
        p.psnr_summary = summarize(p.psnr);
    }
    return profiles;
}

std::string format_psnr(double v) {
    if (std::isinf(v)) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string scores_csv(const std::vector<QualityScore>& scores) {
    std::ostringstream os;
    os << "example_id,ssi,psnr\n";
    char buf[32];
    for (const auto& s : scores) {
        std::snprintf(buf, sizeof buf, "%.6f", s.ssi);
        os << s.example_id << ',' << buf << ',' << format_psnr(s.psnr) << '\n';
    }
    return os.str();
}

std::string profiles_csv(const std::vector<BinProfile>& profiles) {
    std::ostringstream os;
    os << "bin,metric,count,infinite,mean,min,q1,median,q3,max\n";
    char buf[256];
    for (const auto& p : profiles) {
        for (const auto& [name, s] : {std::pair{"ssi", p.ssi_summary}, std::pair{"psnr", p.psnr_summary}}) {
            std::snprintf(buf, sizeof buf, "%zu,%s,%zu,%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", p.bin_index, name,
                          s.count, s.infinite, s.mean, s.min, s.q1, s.median, s.q3, s.max);
            os << buf;
        }
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Classify the outputs

std::string ClassificationReport::confusion_grid() const {
    std::ostringstream os;
    char buf[32];
    os << "true\\pred";
    for (auto c : classes) {
        std::snprintf(buf, sizeof buf, " %7s", ("s" + std::to_string(c)).c_str());
        os << buf;
    }
    os << '\n';
    for (std::size_t i = 0; i < confusion.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%-9s", ("s" + std::to_string(classes[i])).c_str());
        os << buf;
        for (auto v : confusion[i]) {
            std::snprintf(buf, sizeof buf, " %7zu", v);
            os << buf;
        }
        os << '\n';
    }
    return os.str();
}

bool intervals_disjoint(const data::ExampleSet& a, const data::ExampleSet& b) {
    std::set<std::tuple<std::uint16_t, std::uint16_t, std::uint32_t>> seen;
    for (const auto& e : a.examples) seen.emplace(e.participant_id, e.song_id, e.second_index);
    for (const auto& e : b.examples)
        if (seen.count({e.participant_id, e.song_id, e.second_index})) return false;
    return true;
}

namespace {

nn::Dataset outputs_as_images(nn::Sequential<float>& regressor, const data::ExampleSet& set,
                              const std::map<std::uint16_t, std::size_t>& label_of, std::size_t batch) {
    const auto inputs = data::to_dataset(set);
    nn::Dataset d;
    d.inputs = nn::predict(regressor, inputs.inputs, batch);
    const auto out = regressor.output_shape();
    d.inputs.shape = nn::Shape{out.h, out.w * out.c, 1};
    for (const auto& e : set.examples) d.labels.push_back(label_of.at(e.song_id));
    return d;
}

}  // namespace

ClassificationReport classify_outputs(nn::Sequential<float>& regressor, const data::SplitSets& sets,
                                      const ClassifyConfig& cfg) {
    if (sets.train.examples.empty() || sets.test.examples.empty())
        throw InvalidInput("classify_outputs: empty train or test split");
    const auto in_shape = regressor.input_shape();
    const auto& first = sets.train.examples.front();
    if (first.input.rows != in_shape.h || first.input.cols != in_shape.w)
        throw InvalidInput("classify_outputs: example inputs do not match the regressor input shape");

    ClassificationReport rep;
    rep.untrained_regressor = nn::is_untrained(regressor);

    std::set<std::uint16_t> ids;
    for (const auto* s : {&sets.train, &sets.test})
        for (const auto& e : s->examples) ids.insert(e.song_id);
    if (ids.size() < 2) throw InvalidInput("classify_outputs: need at least two songs");
    rep.classes.assign(ids.begin(), ids.end());
    std::map<std::uint16_t, std::size_t> label_of;
    for (std::size_t i = 0; i < rep.classes.size(); ++i) label_of[rep.classes[i]] = i;

    // Hold out every sixth training chunk for early stopping.
    std::set<std::uint32_t> train_chunks;
    for (const auto& e : sets.train.examples) train_chunks.insert(e.chunk_index);
    std::set<std::uint32_t> val_chunks;
    std::size_t ordinal = 0;
    for (auto c : train_chunks)
        if (ordinal++ % 6 == 5) val_chunks.insert(c);
    data::ExampleSet fit, val;
    fit.input_kind = val.input_kind = sets.train.input_kind;
    fit.target_kind = val.target_kind = sets.train.target_kind;
    for (const auto& e : sets.train.examples) (val_chunks.count(e.chunk_index) ? val : fit).examples.push_back(e);
    if (val.examples.size() < 2) val = fit;

    rep.leakage_free = intervals_disjoint(sets.train, sets.test) && intervals_disjoint(fit, sets.test) &&
                       intervals_disjoint(val, sets.test);
    if (!rep.leakage_free) throw std::logic_error("classify_outputs: test intervals overlap classifier training data");

    const auto fit_d = outputs_as_images(regressor, fit, label_of, cfg.batch_size);
    const auto val_d = outputs_as_images(regressor, val, label_of, cfg.batch_size);
    const auto test_d = outputs_as_images(regressor, sets.test, label_of, cfg.batch_size);
    rep.n_train = fit_d.size();
    rep.n_val = val_d.size();
    rep.n_test = test_d.size();

    nn::TrunkOptions trunk;
    trunk.base_filters = cfg.base_filters;
    auto clf = nn::build_classifier(fit_d.inputs.shape, rep.classes.size(), derive_seed(cfg.seed, 0xC1A5), trunk);
    nn::TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.patience = cfg.patience;
    tc.seed = derive_seed(cfg.seed, 0xC1A6);
    tc.objective = nn::Objective::cross_entropy;
    tc.log = cfg.log;
    rep.classifier_training = nn::train(clf, fit_d, val_d, tc);

    const auto pred = nn::predict_classes(clf, test_d.inputs, cfg.batch_size);
    rep.confusion.assign(rep.classes.size(), std::vector<std::size_t>(rep.classes.size(), 0));
    for (std::size_t i = 0; i < pred.size(); ++i) {
        ++rep.confusion[test_d.labels[i]][pred[i]];
        if (pred[i] == test_d.labels[i]) ++rep.correct;
    }
    rep.accuracy = static_cast<double>(rep.correct) / static_cast<double>(pred.size());
    return rep;
}

ClassificationReport classify_outputs(nn::Sequential<float>& regressor, const std::vector<data::Recording>& corpus,
                                      const ClassifyConfig& cfg) {
    const auto sets = data::make_corpus_examples(corpus, cfg.input, cfg.target, cfg.seed, cfg.split_ratio);
    return classify_outputs(regressor, sets, cfg);
}

}  // namespace cortical::metrics
