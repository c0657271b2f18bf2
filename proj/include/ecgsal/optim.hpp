#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ecgsal/tensor.hpp"

namespace ecgsal::ad {

/// Heavy-ball momentum: v <- momentum * v + g, theta <- theta - lr * v.
struct OptimizerState {
    double learning_rate = 0.005;
    double momentum = 0.7;
    std::vector<std::vector<double>> velocity;
};

/// Updates every tensor in `params` from its accumulated gradient. Tensors
/// without a gradient buffer are treated as having a zero gradient.
void sgd_momentum_step(std::span<Tensor> params, OptimizerState& state);

/// Plain step m <- m - lr * grad.
void gradient_descent_step(Tensor& m, std::span<const double> grad, double learning_rate);

void zero_grads(std::span<Tensor> params);

/// Named tensors in a fixed order; the unit of checkpointing.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Text checkpoint with hex-float values, so save/load is bit exact.
void save_checkpoint(const std::string& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::string& path);

/// Loads a checkpoint and copies values into `target` by name; names and
/// shapes must match exactly.
void restore_checkpoint(const std::string& path, const NamedTensors& target);

}  // namespace ecgsal::ad
