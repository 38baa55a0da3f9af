#include "cortical/nn/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "cortical/common.hpp"

namespace cortical::nn {
namespace {

Tensor<float> gather_inputs(const Tensor<float>& src, const std::vector<std::size_t>& idx, std::size_t lo,
                            std::size_t hi) {
    Tensor<float> out(hi - lo, src.shape);
    const std::size_t per = src.per_example();
    for (std::size_t i = lo; i < hi; ++i) std::copy_n(src.example(idx[i]), per, out.example(i - lo));
    return out;
}

std::vector<float> gather_targets(const Dataset& d, const std::vector<std::size_t>& idx, std::size_t lo,
                                  std::size_t hi) {
    const std::size_t per = d.targets.size() / d.size();
    std::vector<float> out((hi - lo) * per);
    for (std::size_t i = lo; i < hi; ++i)
        std::copy_n(d.targets.data() + idx[i] * per, per, out.data() + (i - lo) * per);
    return out;
}

std::vector<std::size_t> gather_labels(const Dataset& d, const std::vector<std::size_t>& idx, std::size_t lo,
                                       std::size_t hi) {
    std::vector<std::size_t> out;
    for (std::size_t i = lo; i < hi; ++i) out.push_back(d.labels[idx[i]]);
    return out;
}

double batch_loss(const Tensor<float>& out, const Dataset& d, const std::vector<std::size_t>& idx,
                  std::size_t lo, std::size_t hi, Objective obj, Tensor<float>* grad) {
    if (obj == Objective::mse) return mse_loss(out, gather_targets(d, idx, lo, hi), grad);
    return softmax_cross_entropy(out, gather_labels(d, idx, lo, hi), grad);
}

void validate(const Dataset& d, const Sequential<float>& model, Objective obj, const char* which) {
    if (d.size() == 0) throw InvalidInput(std::string("train: empty ") + which + " set");
    if (d.inputs.shape != model.input_shape()) throw InvalidInput(std::string("train: ") + which + " input shape");
    if (obj == Objective::mse && d.targets.size() != d.size() * model.output_shape().size())
        throw InvalidInput(std::string("train: ") + which + " target size mismatch");
    if (obj == Objective::cross_entropy && d.labels.size() != d.size())
        throw InvalidInput(std::string("train: ") + which + " label count mismatch");
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch_size) {
    if (batch_size == 0) throw InvalidInput("batch_size must be positive");
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t lo = 0; lo < n; lo += batch_size) out.emplace_back(lo, std::min(n, lo + batch_size));
    if (out.size() > 1 && out.back().second - out.back().first == 1) {
        out[out.size() - 2].second = n;
        out.pop_back();
    }
    return out;
}

TrainReport train(Sequential<float>& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg) {
    validate(train_set, model, cfg.objective, "train");
    validate(val_set, model, cfg.objective, "validation");
    if (train_set.size() < 2) throw InvalidInput("train: need at least two training examples");

    TrainReport report;
    report.seed = cfg.seed;
    report.objective = cfg.objective;
    report.train_loss_mode = cfg.train_loss;
    report.best_val_loss = INFINITY;

    Adam<float> adam(cfg.adam);
    const std::uint64_t dropout_seed = derive_seed(cfg.seed, 0xD40F);
    std::uint64_t step = 0;
    std::size_t since_best = 0;

    std::vector<std::vector<float>> best;
    auto snapshot = [&] {
        best.clear();
        for (auto& p : model.params()) best.push_back(*p.value);
    };
    auto restore = [&] {
        auto ps = model.params();
        for (std::size_t i = 0; i < ps.size(); ++i) *ps[i].value = best[i];
    };

    std::vector<std::size_t> order(train_set.size());
    Tensor<float> grad;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(derive_seed(cfg.seed, 0x5EED, epoch));
        cortical::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        for (const auto& [lo, hi] : batch_ranges(order.size(), cfg.batch_size)) {
            const auto xb = gather_inputs(train_set.inputs, order, lo, hi);
            model.set_step(dropout_seed, step++);
            const auto& out = model.forward(xb, Mode::train);
            const double loss = batch_loss(out, train_set, order, lo, hi, cfg.objective, &grad);
            if (!std::isfinite(loss)) throw DivergenceError("training loss is not finite", static_cast<long>(epoch));
            loss_sum += loss * static_cast<double>(hi - lo);
            model.zero_grad();
            model.backward(grad);
            try {
                adam.step(model.params());
            } catch (const DivergenceError& e) {
                throw DivergenceError(e.what(), static_cast<long>(epoch));
            }
        }
        const double train_loss = cfg.train_loss == TrainLossMode::running
                                      ? loss_sum / static_cast<double>(train_set.size())
                                      : evaluate_loss(model, train_set, cfg.objective, cfg.batch_size);
        if (!std::isfinite(train_loss)) throw DivergenceError("training loss is not finite", static_cast<long>(epoch));
        const double val_loss = evaluate_loss(model, val_set, cfg.objective, cfg.batch_size);
        if (!std::isfinite(val_loss)) throw DivergenceError("validation loss is not finite", static_cast<long>(epoch));
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        report.epochs.push_back({epoch, train_loss, val_loss, ms});
        if (cfg.log)
            *cfg.log << "epoch " << epoch << "  train " << fmt(train_loss) << "  val " << fmt(val_loss) << "  ("
                     << static_cast<long>(ms) << " ms)\n"
                     << std::flush;

        if (val_loss < report.best_val_loss - cfg.min_delta || best.empty()) {
            report.best_val_loss = std::min(report.best_val_loss, val_loss);
            report.best_epoch = epoch;
            since_best = 0;
            snapshot();
        } else if (++since_best >= cfg.patience) {
            report.plateaued = true;
            break;
        }
        if (cfg.stop_at_train_loss && train_loss < *cfg.stop_at_train_loss) {
            // Keep the weights that reached the target rather than the best-validation ones.
            snapshot();
            break;
        }
    }
    restore();
    return report;
}

Tensor<float> predict(Sequential<float>& model, const Tensor<float>& inputs, std::size_t batch_size) {
    Tensor<float> out(inputs.n, model.output_shape());
    std::vector<std::size_t> idx(inputs.n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t lo = 0; lo < inputs.n; lo += batch_size) {
        const std::size_t hi = std::min(inputs.n, lo + batch_size);
        const auto& y = model.forward(gather_inputs(inputs, idx, lo, hi), Mode::eval);
        std::copy(y.data.begin(), y.data.end(), out.example(lo));
    }
    return out;
}

double evaluate_loss(Sequential<float>& model, const Dataset& set, Objective objective, std::size_t batch_size) {
    std::vector<std::size_t> idx(set.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    double sum = 0.0;
    for (std::size_t lo = 0; lo < set.size(); lo += batch_size) {
        const std::size_t hi = std::min(set.size(), lo + batch_size);
        const auto& y = model.forward(gather_inputs(set.inputs, idx, lo, hi), Mode::eval);
        sum += batch_loss(y, set, idx, lo, hi, objective, nullptr) * static_cast<double>(hi - lo);
    }
    return sum / static_cast<double>(set.size());
}

std::vector<std::size_t> predict_classes(Sequential<float>& model, const Tensor<float>& inputs,
                                         std::size_t batch_size) {
    const auto logits = predict(model, inputs, batch_size);
    const std::size_t k = logits.per_example();
    std::vector<std::size_t> out(inputs.n);
    for (std::size_t i = 0; i < inputs.n; ++i) {
        const float* row = logits.example(i);
        out[i] = static_cast<std::size_t>(std::max_element(row, row + k) - row);
    }
    return out;
}

std::string TrainReport::table() const {
    const char* name = objective == Objective::mse ? "mse" : "xent";
    std::ostringstream os;
    char line[128];
    std::snprintf(line, sizeof line, "%6s  %16s  %16s\n", "epoch", (std::string("train_") + name).c_str(),
                  (std::string("val_") + name).c_str());
    os << line;
    for (const auto& e : epochs) {
        std::snprintf(line, sizeof line, "%6zu  %16.9g  %16.9g\n", e.epoch, e.train_loss, e.val_loss);
        os << line;
    }
    os << "best_epoch " << best_epoch << "  best_val " << fmt(best_val_loss) << "  plateaued "
       << (plateaued ? "yes" : "no") << "  seed " << seed << "  train_loss "
       << (train_loss_mode == TrainLossMode::running ? "running" : "evaluated") << "\n";
    return os.str();
}

std::string TrainReport::records() const {
    const char* name = objective == Objective::mse ? "mse" : "xent";
    std::ostringstream os;
    os << "epoch,train_" << name << ",val_" << name << "\n";
    for (const auto& e : epochs) os << e.epoch << "," << fmt(e.train_loss) << "," << fmt(e.val_loss) << "\n";
    return os.str();
}

std::string TrainReport::timing() const {
    std::ostringstream os;
    os << "epoch,wall_ms\n";
    for (const auto& e : epochs) os << e.epoch << "," << fmt(e.wall_ms) << "\n";
    return os.str();
}

}  // namespace cortical::nn
