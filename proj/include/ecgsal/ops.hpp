#pragma once

// Differentiable operations. Every op accepts an optional leading batch axis:
// a rank-2 [C, L] signal is treated as a batch of one. Ops record a backward
// rule on the tape only when some input requires a gradient.

#include <cstddef>
#include <span>

#include "ecgsal/tensor.hpp"

namespace ecgsal::ad {

enum class Padding { same, valid };

/// Cross-correlation (no kernel flip). x: [C_in, L] or [N, C_in, L];
/// w: [C_out, C_in, K]; b: [C_out] or undefined for no bias.
/// Same padding yields ceil(L / stride) outputs with the extra pad on the right.
Tensor conv1d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b,
              std::size_t stride = 1, Padding padding = Padding::same);

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                                 Padding padding);

enum class BatchNormMode { train, eval };

/// Running statistics owned by a batch-norm layer. `updates` counts train
/// steps; eval mode refuses to run while it is zero.
struct BatchNormStats {
    Tensor running_mean;
    Tensor running_var;
    Tensor updates;

    explicit BatchNormStats(std::size_t channels = 0);
    bool initialized() const { return updates.defined() && updates[0] > 0.0; }
};

/// Per-channel normalisation over every axis except the channel axis
/// (axis 0 for [C, L], axis 1 for [N, C, L]).
Tensor batchnorm1d(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BatchNormStats& stats, BatchNormMode mode, double eps = 1e-5,
                   double momentum = 0.1);

Tensor relu(Tape& tape, const Tensor& x);

/// Window `width`, step `stride`, no padding; ties resolve to the lowest index.
Tensor maxpool1d(Tape& tape, const Tensor& x, std::size_t width, std::size_t stride);

/// Spatial mean: [C, L] -> [C], [N, C, L] -> [N, C].
Tensor gap(Tape& tape, const Tensor& x);

/// y = x w^T + b with x: [In] or [N, In], w: [Out, In], b: [Out].
Tensor dense(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b);

/// Concatenation along the last axis; leading axes must agree.
Tensor concat(Tape& tape, const Tensor& a, const Tensor& b);

/// Concatenation along the channel axis of [C_i, L] or [N, C_i, L] signals.
Tensor concat_channels(Tape& tape, std::span<const Tensor> parts);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor elementwise_mul(Tape& tape, const Tensor& a, const Tensor& b);

/// scale * x + shift, elementwise.
Tensor affine(Tape& tape, const Tensor& x, double scale, double shift);

Tensor reshape(Tape& tape, const Tensor& x, Shape shape);

/// Sum of all elements, as a shape-[1] tensor.
Tensor sum(Tape& tape, const Tensor& x);

/// Element at flat index `index`, as a shape-[1] tensor.
Tensor pick(Tape& tape, const Tensor& x, std::size_t index);

/// Softmax over the last axis.
Tensor softmax(Tape& tape, const Tensor& logits);

/// Mean over the batch of -log softmax(logits)[label]. logits: [C] or [N, C].
Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> labels);

/// Gate order in the stacked weights is input, forget, candidate, output.
struct LstmParams {
    Tensor w_input;      // [4H, D]
    Tensor w_recurrent;  // [4H, H]
    Tensor bias;         // [4H]

    std::size_t hidden() const { return bias.size() / 4; }
};

/// Many-to-one LSTM from zero initial state. x: [T, D] or [N, T, D];
/// returns the final hidden state [H] or [N, H]. Backward is full BPTT.
Tensor lstm_sequence(Tape& tape, const Tensor& x, const LstmParams& params);

}  // namespace ecgsal::ad
