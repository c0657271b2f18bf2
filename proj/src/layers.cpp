#include "ecgsal/layers.hpp"

#include <cmath>

namespace ecgsal::models {
namespace {

ad::Tensor uniform_tensor(ad::Shape shape, double bound, Rng& rng) {
    ad::Tensor t(std::move(shape), 0.0, true);
    for (double& v : t.values()) v = uniform(rng, -bound, bound);
    return t;
}

}  // namespace

Conv1d::Conv1d(std::size_t in, std::size_t out, std::size_t kernel, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel));
    weight = uniform_tensor({out, in, kernel}, bound, rng);
    bias = uniform_tensor({out}, bound, rng);
}

ad::Tensor Conv1d::operator()(ad::Tape& tape, const ad::Tensor& x) const {
    return ad::conv1d(tape, x, weight, bias, 1, ad::Padding::same);
}

void Conv1d::collect(const std::string& prefix, ParameterRegistry& reg) const {
    reg.add(prefix + ".weight", weight);
    reg.add(prefix + ".bias", bias);
}

BatchNorm::BatchNorm(std::size_t channels)
    : gamma(ad::Shape{channels}, 1.0, true), beta(ad::Shape{channels}, 0.0, true), stats(channels) {}

ad::Tensor BatchNorm::operator()(ad::Tape& tape, const ad::Tensor& x, Mode mode) const {
    return ad::batchnorm1d(tape, x, gamma, beta, stats, bn_mode(mode));
}

void BatchNorm::collect(const std::string& prefix, ParameterRegistry& reg) const {
    reg.add(prefix + ".gamma", gamma);
    reg.add(prefix + ".beta", beta);
    reg.add_buffer(prefix + ".running_mean", stats.running_mean);
    reg.add_buffer(prefix + ".running_var", stats.running_var);
    reg.add_buffer(prefix + ".updates", stats.updates);
}

Dense::Dense(std::size_t in, std::size_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight = uniform_tensor({out, in}, bound, rng);
    bias = uniform_tensor({out}, bound, rng);
}

ad::Tensor Dense::operator()(ad::Tape& tape, const ad::Tensor& x) const {
    return ad::dense(tape, x, weight, bias);
}

void Dense::collect(const std::string& prefix, ParameterRegistry& reg) const {
    reg.add(prefix + ".weight", weight);
    reg.add(prefix + ".bias", bias);
}

Mlp::Mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Rng& rng) {
    std::size_t width = in;
    for (std::size_t h : hidden) {
        layers.emplace_back(width, h, rng);
        width = h;
    }
    layers.emplace_back(width, out, rng);
}

ad::Tensor Mlp::operator()(ad::Tape& tape, const ad::Tensor& x) const {
    ad::Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = layers[i](tape, h);
        if (i + 1 < layers.size()) h = ad::relu(tape, h);
    }
    return h;
}

void Mlp::collect(const std::string& prefix, ParameterRegistry& reg) const {
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + "." + std::to_string(i), reg);
}

Lstm::Lstm(std::size_t input, std::size_t hidden, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    params.w_input = uniform_tensor({4 * hidden, input}, bound, rng);
    params.w_recurrent = uniform_tensor({4 * hidden, hidden}, bound, rng);
    params.bias = uniform_tensor({4 * hidden}, bound, rng);
    for (std::size_t j = hidden; j < 2 * hidden; ++j) params.bias[j] = 1.0;  // forget gate
}

ad::Tensor Lstm::operator()(ad::Tape& tape, const ad::Tensor& x) const { return ad::lstm_sequence(tape, x, params); }

void Lstm::collect(const std::string& prefix, ParameterRegistry& reg) const {
    reg.add(prefix + ".w_input", params.w_input);
    reg.add(prefix + ".w_recurrent", params.w_recurrent);
    reg.add(prefix + ".bias", params.bias);
}

ResidualUnit::ResidualUnit(std::size_t in, std::size_t out, std::size_t kernel, std::size_t pool_, Rng& rng)
    : first(in, out, kernel, rng),
      first_bn(out),
      second(out, out, kernel, rng),
      second_bn(out),
      has_projection(in != out),
      pool(pool_) {
    if (has_projection) projection = Conv1d(in, out, 1, rng);
}

ad::Tensor ResidualUnit::operator()(ad::Tape& tape, const ad::Tensor& x, Mode mode) const {
    ad::Tensor h = ad::relu(tape, first_bn(tape, first(tape, x), mode));
    h = second_bn(tape, second(tape, h), mode);
    ad::Tensor skip = has_projection ? projection(tape, x) : x;
    if (pool > 1) {
        h = ad::maxpool1d(tape, h, pool, pool);
        skip = ad::maxpool1d(tape, skip, pool, pool);
    }
    return ad::relu(tape, ad::add(tape, h, skip));
}

void ResidualUnit::collect(const std::string& prefix, ParameterRegistry& reg) const {
    first.collect(prefix + ".conv1", reg);
    first_bn.collect(prefix + ".bn1", reg);
    second.collect(prefix + ".conv2", reg);
    second_bn.collect(prefix + ".bn2", reg);
    if (has_projection) projection.collect(prefix + ".skip", reg);
}

}  // namespace ecgsal::models
