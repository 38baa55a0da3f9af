// cortical-audio: command line front end for the EEG -> audio pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cortical/abx.hpp"
#include "cortical/abx_server.hpp"
#include "cortical/dataset.hpp"
#include "cortical/digest.hpp"
#include "cortical/inversion.hpp"
#include "cortical/metrics.hpp"
#include "cortical/nn/checkpoint.hpp"
#include "cortical/pipeline.hpp"

using namespace cortical;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f << text;
    if (!f) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void require_exists(const fs::path& p, const char* what) {
    if (!fs::exists(p)) throw UsageError(std::string(what) + " does not exist: " + p.string());
}

/// Run manifest: command, seed, config, and SHA-256 digests of inputs and outputs.
class Manifest {
public:
    Manifest(std::string command, std::uint64_t seed) {
        j_["command"] = std::move(command);
        j_["seed"] = seed;
        j_["config"] = json::object();
        j_["inputs"] = json::object();
        j_["outputs"] = json::object();
    }
    json& config() { return j_["config"]; }
    void input(const fs::path& p) {
        if (fs::is_directory(p)) {
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(p))
                if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files) j_["inputs"][f.string()] = sha256_file(f);
        } else {
            j_["inputs"][p.string()] = sha256_file(p);
        }
    }
    void output(const fs::path& p) { j_["outputs"][p.filename().string()] = sha256_file(p); }
    void write(const fs::path& dir) { write_text(dir / "manifest.json", j_.dump(2) + "\n"); }

private:
    json j_;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("CORTICAL_AUDIO_SEED")) {
        char* end = nullptr;
        errno = 0;
        const auto v = std::strtoull(env, &end, 10);
        if (errno || end == env || *end) throw UsageError(std::string("CORTICAL_AUDIO_SEED is not an integer: ") + env);
        return v;
    }
    return 0;
}

eeg::InputKind input_kind(const std::string& s) {
    try {
        return eeg::parse_input_kind(s);
    } catch (const InvalidInput& e) {
        throw UsageError(e.what());
    }
}

nn::TargetKind target_kind(const std::string& s) {
    try {
        return nn::parse_target_kind(s);
    } catch (const InvalidInput& e) {
        throw UsageError(e.what());
    }
}

/// Example sets from a `prepare` directory, or built from a corpus on the fly.
struct SetSource {
    std::string examples, corpus;
    std::string input = "psd", target = "mel";
    double ratio = 0.75;

    void add(CLI::App* cmd) {
        cmd->add_option("--examples", examples, "directory written by `prepare`");
        cmd->add_option("--corpus", corpus, "directory of .eegb recordings");
        cmd->add_option("--input", input, "raw | psd (with --corpus)");
        cmd->add_option("--target", target, "mel | linear (with --corpus)");
        cmd->add_option("--split-ratio", ratio, "training fraction of chunks (with --corpus)");
    }

    data::SplitSets load(std::uint64_t seed, Manifest& m) const {
        if (!examples.empty()) {
            require_exists(examples, "examples directory");
            m.input(fs::path(examples) / "train.exst");
            m.input(fs::path(examples) / "test.exst");
            return {data::load_examples(fs::path(examples) / "train.exst"),
                    data::load_examples(fs::path(examples) / "test.exst")};
        }
        if (corpus.empty()) throw UsageError("one of --examples or --corpus is required");
        require_exists(corpus, "corpus directory");
        m.input(corpus);
        return data::make_corpus_examples(pipeline::load_corpus(corpus), input_kind(input), target_kind(target), seed,
                                          ratio);
    }
};

/// Training chunks whose index is 5 mod 6 become the validation set.
std::pair<data::ExampleSet, data::ExampleSet> holdout(const data::ExampleSet& train) {
    data::ExampleSet fit = train, val = train;
    fit.examples.clear();
    val.examples.clear();
    for (const auto& e : train.examples) (e.chunk_index % 6 == 5 ? val : fit).examples.push_back(e);
    return {std::move(fit), std::move(val)};
}

// ---------------------------------------------------------------------------

struct SynthCmd {
    std::size_t songs = 4, participants = 2;
    std::string out;
    double duration = 242.0, noise_uv = 6.0, response_uv = 10.0;

    int run(std::uint64_t seed) {
        if (songs == 0 || participants == 0) throw UsageError("--songs and --participants must be positive");
        make_dir(out);
        data::SynthOptions opts;
        opts.duration_s = duration;
        opts.noise_uv = noise_uv;
        opts.response_uv = response_uv;
        Manifest m("synth", seed);
        m.config() = {{"songs", songs}, {"participants", participants}, {"duration_s", duration},
                      {"noise_uv", noise_uv}, {"response_uv", response_uv}};
        for (const auto& rec : data::synth_corpus(songs, participants, seed, opts)) {
            const auto path = fs::path(out) / data::container_name(rec);
            data::store_container(rec, path);
            m.output(path);
            std::cout << "wrote " << path.string() << "\n";
        }
        m.write(out);
        return 0;
    }
};

struct PrepareCmd {
    SetSource src;
    std::string out;

    int run(std::uint64_t seed) {
        if (src.corpus.empty()) throw UsageError("--corpus is required");
        make_dir(out);
        Manifest m("prepare", seed);
        m.config() = {{"input", src.input}, {"target", src.target}, {"split_ratio", src.ratio}};
        const auto sets = src.load(seed, m);
        for (const auto& [name, set] : {std::pair{"train.exst", &sets.train}, std::pair{"test.exst", &sets.test}}) {
            const auto path = fs::path(out) / name;
            data::store_examples(*set, path);
            m.output(path);
            std::cout << name << ": " << set->examples.size() << " examples\n";
        }
        m.write(out);
        return 0;
    }
};

struct TrainCmd {
    SetSource src;
    std::string out;
    std::size_t epochs = 400, batch = 32, patience = 20, base_filters = 8;
    double lr = nn::AdamConfig{}.lr;

    int run(std::uint64_t seed) {
        make_dir(out);
        Manifest m("train", seed);
        const auto sets = src.load(seed, m);
        const auto [fit, val] = holdout(sets.train);
        if (fit.examples.empty() || val.examples.empty()) throw InvalidInput("training set too small to hold out validation chunks");

        auto opts = nn::default_regressor_options(fit.input_kind);
        opts.base_filters = base_filters;
        auto model = nn::build_regressor(fit.input_kind, fit.target_kind, seed, opts);
        nn::TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.batch_size = batch;
        cfg.patience = patience;
        cfg.seed = seed;
        cfg.adam.lr = lr;
        cfg.log = &std::cout;
        m.config() = {{"input", eeg::to_string(fit.input_kind)}, {"target", nn::to_string(fit.target_kind)},
                      {"epochs", epochs}, {"batch_size", batch}, {"patience", patience},
                      {"base_filters", base_filters}, {"lr", lr}, {"train_examples", fit.examples.size()},
                      {"val_examples", val.examples.size()}};
        const auto report = nn::train(model, data::to_dataset(fit), data::to_dataset(val), cfg);

        const fs::path dir(out);
        nn::save_checkpoint(model, dir / "checkpoint.ckpt");
        write_text(dir / "train_report.txt", "# seed " + std::to_string(seed) + "\n" + report.table());
        write_text(dir / "train_records.csv", report.records());
        write_text(dir / "train_timing.csv", report.timing());
        for (const char* f : {"checkpoint.ckpt", "train_report.txt", "train_records.csv"}) m.output(dir / f);
        m.write(out);
        std::cout << "best epoch " << report.best_epoch << ", val mse " << report.best_val_loss << "\n";
        return 0;
    }
};

struct EvaluateCmd {
    SetSource src;
    std::string checkpoint, out;
    bool debug_identity = false;

    int run(std::uint64_t seed) {
        make_dir(out);
        Manifest m("evaluate", seed);
        const auto sets = src.load(seed, m);
        const auto& test = sets.test;
        std::vector<MatrixF> targets, outputs;
        for (const auto& e : test.examples) targets.push_back(e.target);
        if (debug_identity) {
            outputs = targets;
        } else {
            if (checkpoint.empty()) throw UsageError("--checkpoint is required unless --debug-identity is given");
            require_exists(checkpoint, "checkpoint");
            m.input(checkpoint);
            auto model = nn::load_checkpoint(checkpoint);
            outputs = pipeline::predict_images(model, test);
        }
        m.config() = {{"debug_identity", debug_identity}, {"target", nn::to_string(test.target_kind)},
                      {"ssi_window", metrics::kSsiWindow}};

        const fs::path dir(out);
        const auto scores = metrics::score_examples(targets, outputs);
        std::vector<double> ssi, psnr;
        for (const auto& s : scores) ssi.push_back(s.ssi), psnr.push_back(s.psnr);
        const auto ss = metrics::summarize(ssi), ps = metrics::summarize(psnr);
        std::ostringstream summary;
        auto row = [&](const char* name, const metrics::Summary& s) {
            summary << name << "  n=" << s.count << " inf=" << s.infinite << " mean=" << s.mean << " min=" << s.min
                    << " q1=" << s.q1 << " median=" << s.median << " q3=" << s.q3 << " max=" << s.max << "\n";
        };
        summary << "# seed " << seed << "\n# examples " << scores.size() << "\n";
        row("ssi ", ss);
        row("psnr", ps);
        write_text(dir / "scores.csv", metrics::scores_csv(scores));
        write_text(dir / "summary.txt", summary.str());
        m.output(dir / "scores.csv");
        m.output(dir / "summary.txt");
        if (test.target_kind == nn::TargetKind::mel) {
            write_text(dir / "bin_profiles.csv",
                       metrics::profiles_csv(metrics::per_bin_profiles(test.target_kind, targets, outputs)));
            m.output(dir / "bin_profiles.csv");
        }
        m.write(out);
        std::cout << summary.str();
        return 0;
    }
};

struct InvertCmd {
    std::string corpus, checkpoint, config, out;
    double ratio = 0.75;
    bool all = false;

    int run(std::uint64_t seed) {
        require_exists(corpus, "corpus directory");
        require_exists(checkpoint, "checkpoint");
        make_dir(out);
        Manifest m("invert", seed);
        m.input(corpus);
        m.input(checkpoint);
        inversion::InversionConfig cfg;
        if (!config.empty()) {
            require_exists(config, "inversion config");
            m.input(config);
            cfg = inversion::load_inversion_config(config);
        }
        auto model = nn::load_checkpoint(checkpoint);
        const auto [in_kind, tgt_kind] = pipeline::model_kinds(model);
        if (tgt_kind != nn::TargetKind::mel) throw InvalidInput("invert needs a mel-target model");
        const auto recordings = pipeline::load_corpus(corpus);
        const auto sets = data::make_corpus_examples(recordings, in_kind, tgt_kind, seed, ratio);
        const auto outputs = pipeline::predict_images(model, sets.test);
        const auto chunks = pipeline::test_chunks(sets.test);

        std::vector<pipeline::ChunkKey> keys;
        for (const auto& [k, v] : chunks) keys.push_back(k);
        std::vector<pipeline::ChunkKey> chosen;
        if (all) {
            chosen = keys;
        } else {
            try {
                chosen = pipeline::select_pool(keys, seed);
            } catch (const PlanningError& e) {
                std::cerr << "warning: " << e.what() << "; inverting every test chunk instead\n";
                chosen = keys;
            }
        }

        // Opaque ids keep song and participant out of anything a listener sees.
        auto opaque = [&](const std::string& name) {
            const std::string s = std::to_string(seed) + ":" + name;
            return sha256_hex({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}).substr(0, 16);
        };
        abx::ClipManifest clips;
        const fs::path dir(out);
        std::set<std::pair<std::uint16_t, std::uint32_t>> originals;
        for (const auto& k : chosen) {
            const auto clip = pipeline::invert_chunk(k, chunks.at(k), sets.test, outputs, cfg);
            const auto name = inversion::clip_name(clip.source);
            inversion::write_wav(clip, dir / name);
            m.output(dir / name);
            const auto id = opaque(name);
            clips.reconstructions.push_back({id, k.song_id, k.participant_id, k.start_second()});
            clips.files[id] = name;
            originals.insert({k.song_id, k.start_second()});
            std::cout << "wrote " << name << "\n";
        }
        for (const auto& [song, start] : originals) {
            const auto rec = std::find_if(recordings.begin(), recordings.end(),
                                          [&](const data::Recording& r) { return r.song_id == song; });
            inversion::AudioClip clip;
            clip.samples = pipeline::original_excerpt(*rec, start);
            char name[48];
            std::snprintf(name, sizeof name, "orig_s%02u_t%03u.wav", unsigned(song), unsigned(start));
            inversion::write_wav(clip, dir / name);
            m.output(dir / name);
            const auto id = opaque(name);
            clips.originals.push_back({id, song, start});
            clips.files[id] = name;
        }
        write_text(dir / "clips.json", abx::manifest_to_json(clips) + "\n");
        write_text(dir / "inversion.cfg", inversion::to_text(cfg));
        m.output(dir / "clips.json");
        m.config() = {{"split_ratio", ratio}, {"clips", chosen.size()}, {"originals", originals.size()},
                      {"inversion", inversion::to_text(cfg)}};
        m.write(out);
        return 0;
    }
};

struct ClassifyCmd {
    std::string corpus, checkpoint, out;
    double ratio = 0.75;
    std::size_t epochs = 60, base_filters = 8, patience = 10;

    int run(std::uint64_t seed) {
        require_exists(corpus, "corpus directory");
        require_exists(checkpoint, "checkpoint");
        make_dir(out);
        Manifest m("classify-outputs", seed);
        m.input(corpus);
        m.input(checkpoint);
        auto model = nn::load_checkpoint(checkpoint);
        metrics::ClassifyConfig cfg;
        std::tie(cfg.input, cfg.target) = pipeline::model_kinds(model);
        cfg.seed = seed;
        cfg.split_ratio = ratio;
        cfg.epochs = epochs;
        cfg.base_filters = base_filters;
        cfg.patience = patience;
        cfg.log = &std::cout;
        m.config() = {{"input", eeg::to_string(cfg.input)}, {"target", nn::to_string(cfg.target)},
                      {"split_ratio", ratio}, {"epochs", epochs}, {"base_filters", base_filters},
                      {"patience", patience}};
        const auto r = metrics::classify_outputs(model, pipeline::load_corpus(corpus), cfg);

        std::ostringstream text;
        text << "# seed " << seed << "\n"
             << "pipeline " << eeg::to_string(cfg.input) << "->" << nn::to_string(cfg.target) << "\n"
             << "train " << r.n_train << "  val " << r.n_val << "  test " << r.n_test << "\n"
             << "accuracy " << r.correct << "/" << r.n_test << " = " << abx::format_rate(100.0 * r.accuracy) << "%\n"
             << "chance " << 100.0 / static_cast<double>(r.classes.size()) << "%\n"
             << "untrained_regressor " << (r.untrained_regressor ? "yes" : "no") << "\n"
             << "leakage_free " << (r.leakage_free ? "yes" : "no") << "\n\n"
             << r.confusion_grid();
        json rec{{"seed", seed},
                 {"accuracy", r.accuracy},
                 {"correct", r.correct},
                 {"n_train", r.n_train},
                 {"n_val", r.n_val},
                 {"n_test", r.n_test},
                 {"classes", r.classes},
                 {"confusion", r.confusion},
                 {"untrained_regressor", r.untrained_regressor},
                 {"leakage_free", r.leakage_free}};
        const fs::path dir(out);
        write_text(dir / "classification.txt", text.str());
        write_text(dir / "classification.json", rec.dump(2) + "\n");
        write_text(dir / "classifier_records.csv", r.classifier_training.records());
        for (const char* f : {"classification.txt", "classification.json", "classifier_records.csv"}) m.output(dir / f);
        m.write(out);
        std::cout << text.str();
        return 0;
    }
};

abx::Server* g_server = nullptr;
extern "C" void on_signal(int) {
    if (g_server) g_server->stop();
}

struct ServeCmd {
    std::string clips, data_dir, host = "127.0.0.1", ui;
    int port = 8080;

    int run(std::uint64_t seed) {
        const fs::path clip_dir(clips);
        require_exists(clip_dir / "clips.json", "clip manifest");
        const auto manifest = abx::manifest_from_json(read_text(clip_dir / "clips.json"));
        auto plans = abx::generate_plans(manifest.reconstructions, manifest.originals, seed);
        const auto violations = abx::audit_plans(plans, manifest.reconstructions, manifest.originals);
        if (!violations.empty()) throw PlanningError("generated plan fails the audit: " + violations.front());
        make_dir(data_dir);
        write_text(fs::path(data_dir) / "plan_v1.json", abx::plan_to_json(plans.first) + "\n");
        write_text(fs::path(data_dir) / "plan_v2.json", abx::plan_to_json(plans.second) + "\n");

        abx::SessionStore store(data_dir, std::move(plans));
        std::optional<fs::path> ui_dir;
        if (!ui.empty()) ui_dir = ui;
        abx::Server server(store, manifest, clip_dir, ui_dir);
        const int bound = server.bind(host, port);
        g_server = &server;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        std::cout << "serving on http://" << host << ":" << bound << " (seed " << seed << ")" << std::endl;
        server.run();
        g_server = nullptr;
        return 0;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EEG to audio reconstruction pipeline"};
    app.require_subcommand(1);
    std::optional<std::uint64_t> seed_flag;
    app.add_option("--seed", seed_flag, "random seed (falls back to CORTICAL_AUDIO_SEED, then 0)");

    SynthCmd synth;
    auto* c_synth = app.add_subcommand("synth", "write a synthetic EEG/audio corpus");
    c_synth->add_option("--songs", synth.songs);
    c_synth->add_option("--participants", synth.participants);
    c_synth->add_option("--duration", synth.duration, "seconds of audio per song");
    c_synth->add_option("--noise-uv", synth.noise_uv);
    c_synth->add_option("--response-uv", synth.response_uv);
    c_synth->add_option("--out", synth.out)->required();

    PrepareCmd prepare;
    auto* c_prepare = app.add_subcommand("prepare", "build train/test example sets");
    prepare.src.add(c_prepare);
    c_prepare->add_option("--out", prepare.out)->required();

    TrainCmd train;
    auto* c_train = app.add_subcommand("train", "train a regressor");
    train.src.add(c_train);
    c_train->add_option("--epochs", train.epochs);
    c_train->add_option("--batch-size", train.batch);
    c_train->add_option("--patience", train.patience);
    c_train->add_option("--base-filters", train.base_filters, "first conv layer width (8 reproduces the reference)");
    c_train->add_option("--lr", train.lr);
    c_train->add_option("--out", train.out)->required();

    EvaluateCmd evaluate;
    auto* c_eval = app.add_subcommand("evaluate", "SSI/PSNR reports on the test set");
    evaluate.src.add(c_eval);
    c_eval->add_option("--checkpoint", evaluate.checkpoint);
    c_eval->add_flag("--debug-identity", evaluate.debug_identity, "score the targets against themselves");
    c_eval->add_option("--out", evaluate.out)->required();

    InvertCmd invert;
    auto* c_invert = app.add_subcommand("invert", "reconstruct WAV clips from model outputs");
    c_invert->add_option("--corpus", invert.corpus)->required();
    c_invert->add_option("--checkpoint", invert.checkpoint)->required();
    c_invert->add_option("--config", invert.config, "inversion config file");
    c_invert->add_option("--split-ratio", invert.ratio);
    c_invert->add_flag("--all", invert.all, "invert every test chunk instead of the 48-clip pool");
    c_invert->add_option("--out", invert.out)->required();

    ClassifyCmd classify;
    auto* c_classify = app.add_subcommand("classify-outputs", "song classification on regressor outputs");
    c_classify->add_option("--corpus", classify.corpus)->required();
    c_classify->add_option("--checkpoint", classify.checkpoint)->required();
    c_classify->add_option("--split-ratio", classify.ratio);
    c_classify->add_option("--epochs", classify.epochs);
    c_classify->add_option("--patience", classify.patience);
    c_classify->add_option("--base-filters", classify.base_filters);
    c_classify->add_option("--out", classify.out)->required();

    ServeCmd serve;
    auto* c_serve = app.add_subcommand("serve", "run the AB-X listening test service");
    c_serve->add_option("--clips", serve.clips, "directory written by `invert`")->required();
    c_serve->add_option("--data", serve.data_dir, "session log directory")->required();
    c_serve->add_option("--host", serve.host);
    c_serve->add_option("--port", serve.port);
    c_serve->add_option("--ui", serve.ui, "static UI directory mounted at /");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        const auto seed = resolve_seed(seed_flag);
        if (c_synth->parsed()) return synth.run(seed);
        if (c_prepare->parsed()) return prepare.run(seed);
        if (c_train->parsed()) return train.run(seed);
        if (c_eval->parsed()) return evaluate.run(seed);
        if (c_invert->parsed()) return invert.run(seed);
        if (c_classify->parsed()) return classify.run(seed);
        if (c_serve->parsed()) return serve.run(seed);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
