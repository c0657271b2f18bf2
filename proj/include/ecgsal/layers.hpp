#pragma once

// Parameterised building blocks shared by the networks.

#include <cstddef>
#include <string>
#include <vector>

#include "ecgsal/ops.hpp"
#include "ecgsal/optim.hpp"
#include "ecgsal/random.hpp"

namespace ecgsal::models {

enum class Mode { train, eval };

/// Trainable tensors and persistent buffers (batch-norm statistics) of a network.
struct ParameterRegistry {
    ad::NamedTensors trainable;
    ad::NamedTensors buffers;

    void add(const std::string& name, const ad::Tensor& t) { trainable.emplace_back(name, t); }
    void add_buffer(const std::string& name, const ad::Tensor& t) { buffers.emplace_back(name, t); }
};

struct Conv1d {
    ad::Tensor weight;  // [out, in, kernel]
    ad::Tensor bias;    // [out]

    Conv1d() = default;
    Conv1d(std::size_t in, std::size_t out, std::size_t kernel, Rng& rng);
    ad::Tensor operator()(ad::Tape& tape, const ad::Tensor& x) const;
    void collect(const std::string& prefix, ParameterRegistry& reg) const;
};

struct BatchNorm {
    ad::Tensor gamma;
    ad::Tensor beta;
    mutable ad::BatchNormStats stats;

    BatchNorm() = default;
    explicit BatchNorm(std::size_t channels);
    ad::Tensor operator()(ad::Tape& tape, const ad::Tensor& x, Mode mode) const;
    void collect(const std::string& prefix, ParameterRegistry& reg) const;
};

struct Dense {
    ad::Tensor weight;  // [out, in]
    ad::Tensor bias;

    Dense() = default;
    Dense(std::size_t in, std::size_t out, Rng& rng);
    ad::Tensor operator()(ad::Tape& tape, const ad::Tensor& x) const;
    void collect(const std::string& prefix, ParameterRegistry& reg) const;
};

/// Stack of dense layers with ReLU between them (none after the last).
struct Mlp {
    std::vector<Dense> layers;

    Mlp() = default;
    Mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Rng& rng);
    ad::Tensor operator()(ad::Tape& tape, const ad::Tensor& x) const;
    void collect(const std::string& prefix, ParameterRegistry& reg) const;
};

struct Lstm {
    ad::LstmParams params;

    Lstm() = default;
    Lstm(std::size_t input, std::size_t hidden, Rng& rng);
    ad::Tensor operator()(ad::Tape& tape, const ad::Tensor& x) const;
    void collect(const std::string& prefix, ParameterRegistry& reg) const;
};

/// conv -> BN -> ReLU -> conv -> BN, plus a skip path (1-wide projection when
/// the channel count changes); both paths are max-pooled by `pool` before the
/// sum, followed by ReLU.
struct ResidualUnit {
    Conv1d first;
    BatchNorm first_bn;
    Conv1d second;
    BatchNorm second_bn;
    bool has_projection = false;
    Conv1d projection;
    std::size_t pool = 1;

    ResidualUnit() = default;
    ResidualUnit(std::size_t in, std::size_t out, std::size_t kernel, std::size_t pool, Rng& rng);
    ad::Tensor operator()(ad::Tape& tape, const ad::Tensor& x, Mode mode) const;
    void collect(const std::string& prefix, ParameterRegistry& reg) const;
};

inline ad::BatchNormMode bn_mode(Mode m) {
    return m == Mode::train ? ad::BatchNormMode::train : ad::BatchNormMode::eval;
}

}  // namespace ecgsal::models
