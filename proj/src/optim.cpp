#include "ecgsal/optim.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "ecgsal/error.hpp"

namespace ecgsal::ad {

namespace {
constexpr const char* kCheckpointMagic = "ecgsal-checkpoint";
constexpr int kCheckpointVersion = 1;
}  // namespace

void sgd_momentum_step(std::span<Tensor> params, OptimizerState& state) {
    if (state.velocity.empty()) {
        for (const auto& p : params) state.velocity.emplace_back(p.size(), 0.0);
    }
    if (state.velocity.size() != params.size()) {
        throw ShapeError("sgd_momentum_step: optimizer state tracks " + std::to_string(state.velocity.size()) +
                         " tensors, got " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& v = state.velocity[i];
        auto theta = params[i].values();
        if (v.size() != theta.size()) {
            throw ShapeError("sgd_momentum_step: velocity shape mismatch for parameter " + std::to_string(i));
        }
        const bool has = params[i].has_grad();
        std::span<const double> g = has ? std::as_const(params[i]).grad() : std::span<const double>{};
        for (std::size_t j = 0; j < v.size(); ++j) {
            v[j] = state.momentum * v[j] + (has ? g[j] : 0.0);
            theta[j] -= state.learning_rate * v[j];
        }
    }
}

void gradient_descent_step(Tensor& m, std::span<const double> grad, double learning_rate) {
    if (grad.size() != m.size()) {
        throw ShapeError("gradient_descent_step: gradient length " + std::to_string(grad.size()) +
                         " for tensor " + to_string(m.shape()));
    }
    auto v = m.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= learning_rate * grad[i];
}

void zero_grads(std::span<Tensor> params) {
    for (auto& p : params) {
        if (p.has_grad()) p.zero_grad();
    }
}

void save_checkpoint(const std::string& path, const NamedTensors& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n' << tensors.size() << '\n';
    char buf[64];
    for (const auto& [name, t] : tensors) {
        out << name << ' ' << t.rank();
        for (auto d : t.shape()) out << ' ' << d;
        out << '\n';
        const auto v = t.values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%a", v[i]);
            out << (i ? " " : "") << buf;
        }
        out << '\n';
    }
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

NamedTensors load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string magic;
    int version = 0;
    std::size_t count = 0;
    if (!(in >> magic >> version >> count) || magic != kCheckpointMagic) {
        throw ParseError(1, "not a checkpoint file: " + path);
    }
    if (version != kCheckpointVersion) {
        throw UnsupportedFormatError("checkpoint version " + std::to_string(version) + " is not supported");
    }
    NamedTensors result;
    for (std::size_t e = 0; e < count; ++e) {
        std::string name;
        std::size_t rank = 0;
        if (!(in >> name >> rank)) throw UnexpectedEofError("checkpoint truncated at entry " + std::to_string(e));
        Shape shape(rank);
        for (auto& d : shape) {
            if (!(in >> d)) throw UnexpectedEofError("checkpoint truncated in shape of " + name);
        }
        std::vector<double> values(numel(shape));
        std::string token;
        for (auto& v : values) {
            if (!(in >> token)) throw UnexpectedEofError("checkpoint truncated in values of " + name);
            char* end = nullptr;
            v = std::strtod(token.c_str(), &end);
            if (end != token.c_str() + token.size()) throw ParseError(0, "bad value '" + token + "' in " + name);
        }
        result.emplace_back(name, Tensor(std::move(shape), std::move(values)));
    }
    return result;
}

void restore_checkpoint(const std::string& path, const NamedTensors& target) {
    const auto loaded = load_checkpoint(path);
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : loaded) by_name[name] = &t;
    if (by_name.size() != target.size()) {
        throw ShapeError("checkpoint " + path + " holds " + std::to_string(by_name.size()) + " tensors, model has " +
                         std::to_string(target.size()));
    }
    for (const auto& [name, t] : target) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ShapeError("checkpoint " + path + " lacks tensor " + name);
        if (it->second->shape() != t.shape()) {
            throw ShapeError("checkpoint tensor " + name + " has shape " + to_string(it->second->shape()) +
                             ", model expects " + to_string(t.shape()));
        }
        Tensor dst = t;
        std::copy(it->second->values().begin(), it->second->values().end(), dst.values().begin());
    }
}

}  // namespace ecgsal::ad
