#pragma once

// Class activation maps from the GAP network and learned input-deletion
// masks optimised through a frozen recurrent classifier.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ecgsal/models.hpp"
#include "ecgsal/signal_io.hpp"
#include "ecgsal/synth.hpp"

namespace ecgsal::saliency {

inline constexpr std::size_t kCamLength = 48;

/// raw[x] = sum_k w_c[k] * f[k][x]. f: [K, L], w_c: [K].
std::vector<double> compute_cam(const ad::Tensor& f, std::span<const double> w_c);

/// Linear interpolation onto `length` points with both endpoints aligned.
std::vector<double> upsample_linear(std::span<const double> raw, std::size_t length = io::kWindowLength);

/// (v - min) / (max - min); a constant input maps to 0.5 everywhere.
std::vector<double> normalize_unit(std::span<const double> values);

struct Cam {
    io::RhythmClass cls = io::RhythmClass::N;
    std::vector<double> raw;        // 48
    std::vector<double> upsampled;  // 720
    std::vector<double> overlay;    // 720, in [0, 1]
};

struct Upsampled {
    std::vector<double> upsampled;
    std::vector<double> overlay;
};

Upsampled upsample_normalize(std::span<const double> raw);

/// CAM of class `cls` for one 720-sample window, from an eval-mode forward pass.
Cam cam_for_window(const models::CamNetModel& model, std::span<const double> samples, io::RhythmClass cls);

enum class Convention { deletion, literal };

std::string_view convention_name(Convention c);
/// "deletion" or "literal"; throws ConfigError otherwise.
Convention parse_convention(std::string_view name);

/// deletion: (1 - m) * x + k * m.  literal: (1 - m) * x + k * (1 - m).
std::vector<double> perturb(std::span<const double> x, std::span<const double> m, double k, Convention convention);

struct MaskConfig {
    double lambda1 = 1.0;
    double lambda2 = 0.001;
    double learning_rate = 0.001;
    std::size_t iterations = 500;
    double k = 0.0;
    Convention convention = Convention::deletion;

    void validate() const;
};

struct LossTerms {
    double total = 0.0;
    double term1 = 0.0;  // sparsity
    double term2 = 0.0;  // smoothness
    double term3 = 0.0;  // target-class probability on the perturbed input
};

/// Logits [classes] of the frozen network for a [720] input.
using TargetNetwork = std::function<ad::Tensor(ad::Tape&, const ad::Tensor&)>;

/// The LSTM -> FC path of the classifier with the CNN features held at
/// their value on the unperturbed window `x`.
TargetNetwork lstm_path(const models::ClassifierModel& model, std::span<const double> x);

/// Objective and, when `grad` is non-null, its gradient with respect to m.
/// The sparsity and smoothness terms use sums over samples.
LossTerms mask_loss(const TargetNetwork& net, std::span<const double> x, std::span<const double> m,
                    std::size_t target, const MaskConfig& config, std::vector<double>* grad = nullptr);

struct MaskState {
    std::vector<double> m;
    std::vector<LossTerms> history;  // objective at the start of each iteration
    LossTerms final;                 // objective at the returned mask
    std::size_t predicted = 0;       // network's class on the unperturbed input
    std::optional<std::string> warning;
};

/// Projected gradient descent from m = 0; m is clamped to [0, 1] after every step.
/// Throws NumericError naming the iteration when the objective is not finite.
MaskState optimize_mask(const TargetNetwork& net, std::span<const double> x, std::size_t target,
                        const MaskConfig& config);

/// deletion: m normalised; literal: (1 - m) normalised.
std::vector<double> saliency_from_mask(std::span<const double> m, Convention convention);

/// Share of the top-decile overlay mass that falls inside `truth`.
double top_decile_fraction(std::span<const double> overlay, std::span<const synth::Interval> truth);

}  // namespace ecgsal::saliency
