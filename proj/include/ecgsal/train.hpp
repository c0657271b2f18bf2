#pragma once

// Mini-batch training with heavy-ball SGD, batched prediction and the
// classification metrics reported for every model.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecgsal/error.hpp"
#include "ecgsal/layers.hpp"
#include "ecgsal/signal_io.hpp"

namespace ecgsal::training {

struct TrainConfig {
    double learning_rate = 0.005;
    double momentum = 0.7;
    std::size_t batch_size = 16;
    std::size_t epochs = 30;
    std::uint64_t seed = 0;
    /// When non-empty, the model state is saved as <dir>/epoch_<e>.ckpt after each epoch.
    std::string checkpoint_dir;
};

struct TrainResult {
    std::vector<double> loss_curve;  // mean batch loss per epoch
    std::vector<std::string> checkpoints;
};

/// Called after every epoch with (epoch, mean loss).
using EpochCallback = std::function<void(std::size_t, double)>;

/// Rows of `windows` selected by `rows`, as an [N, 720] tensor.
ad::Tensor stack_windows(std::span<const io::Window> windows, std::span<const std::size_t> rows);
std::vector<int> labels_of(std::span<const io::Window> windows, std::span<const std::size_t> rows);

std::string checkpoint_path(const std::string& dir, std::size_t epoch);

template <class Model>
TrainResult train(Model& model, std::span<const io::Window> data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {}) {
    if (config.epochs > 0 && data.empty()) throw InsufficientDataError("training set is empty");
    if (config.batch_size == 0) throw ConfigError("batch size must be positive");
    std::vector<ad::Tensor> params = model.parameters();
    ad::OptimizerState opt{config.learning_rate, config.momentum, {}};
    Rng rng(config.seed);
    std::vector<std::size_t> order(data.size());
    TrainResult result;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle(std::span<std::size_t>(order), rng);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            const std::span<const std::size_t> rows(order.data() + start, stop - start);
            ad::Tape tape;
            const ad::Tensor x = stack_windows(data, rows);
            const std::vector<int> y = labels_of(data, rows);
            ad::Tensor loss = ad::softmax_cross_entropy(tape, model.logits(tape, x, models::Mode::train), y);
            if (!std::isfinite(loss.item())) {
                throw NumericError("training diverged: loss " + std::to_string(loss.item()) + " at epoch " +
                                   std::to_string(epoch) + ", batch " + std::to_string(batches));
            }
            tape.backward(loss);
            ad::sgd_momentum_step(params, opt);
            ad::zero_grads(params);
            total += loss.item();
            ++batches;
        }
        const double mean = total / static_cast<double>(batches);
        result.loss_curve.push_back(mean);
        if (!config.checkpoint_dir.empty()) {
            result.checkpoints.push_back(checkpoint_path(config.checkpoint_dir, epoch));
            ad::save_checkpoint(result.checkpoints.back(), model.state());
        }
        if (on_epoch) on_epoch(epoch, mean);
    }
    return result;
}

struct Prediction {
    int label = 0;                      // argmax, ties to the lowest index
    std::vector<double> probabilities;
};

std::size_t argmax(std::span<const double> values);

/// Eval-mode forward passes over `windows` in chunks of `batch_size`.
template <class Model>
std::vector<Prediction> predict(const Model& model, std::span<const io::Window> windows,
                                std::size_t batch_size = 64) {
    std::vector<Prediction> out;
    out.reserve(windows.size());
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < windows.size(); start += batch_size) {
        rows.resize(std::min(windows.size(), start + batch_size) - start);
        std::iota(rows.begin(), rows.end(), start);
        ad::Tape tape = ad::Tape::inference();
        const ad::Tensor probs = ad::softmax(tape, model.logits(tape, stack_windows(windows, rows), models::Mode::eval));
        const std::size_t classes = probs.dim(1);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            Prediction p;
            p.probabilities.assign(probs.values().begin() + r * classes, probs.values().begin() + (r + 1) * classes);
            p.label = static_cast<int>(argmax(p.probabilities));
            out.push_back(std::move(p));
        }
    }
    return out;
}

struct ClassScores {
    std::optional<double> precision;  // undefined when the class is neither present nor predicted
    std::optional<double> recall;     // undefined when the class is absent from the truth
    std::optional<double> f1;
    std::size_t support = 0;
};

struct Metrics {
    std::array<std::array<std::size_t, io::kClassCount>, io::kClassCount> confusion{};  // [truth][predicted]
    std::array<ClassScores, io::kClassCount> per_class{};
    double macro_precision = 0.0;  // means over the defined per-class values
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    double accuracy = 0.0;
    std::size_t total = 0;

    /// True when some class has an undefined score.
    bool partial() const;
};

Metrics compute_metrics(std::span<const int> truth, std::span<const int> predicted);

template <class Model>
Metrics evaluate(const Model& model, std::span<const io::Window> windows) {
    if (windows.empty()) throw InsufficientDataError("test set is empty");
    std::vector<int> truth;
    std::vector<int> predicted;
    for (const auto& w : windows) truth.push_back(io::class_index(w.label));
    for (const auto& p : predict(model, windows)) predicted.push_back(p.label);
    return compute_metrics(truth, predicted);
}

/// "class,precision,recall,f1,support" rows then macro and accuracy rows;
/// undefined values are written as "undefined".
std::string metrics_csv(const Metrics& m);
std::string confusion_csv(const Metrics& m);
std::string loss_curve_csv(std::span<const double> curve);

}  // namespace ecgsal::training
