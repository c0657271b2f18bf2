#include "ecgsal/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ecgsal/error.hpp"
#include "ecgsal/train.hpp"

namespace ecgsal::saliency {
namespace {

void require_equal_length(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw ShapeError(std::string(what) + ": lengths differ (" + std::to_string(a) + " vs " + std::to_string(b) +
                         ")");
    }
}

double sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

std::vector<double> compute_cam(const ad::Tensor& f, std::span<const double> w_c) {
    if (f.rank() != 2 || f.dim(0) != w_c.size()) {
        throw ShapeError("compute_cam: feature map " + ad::to_string(f.shape()) + " does not match " +
                         std::to_string(w_c.size()) + " class weights");
    }
    const std::size_t K = f.dim(0);
    const std::size_t L = f.dim(1);
    const auto fv = f.values();
    std::vector<double> raw(L, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t x = 0; x < L; ++x) raw[x] += w_c[k] * fv[k * L + x];
    }
    return raw;
}

std::vector<double> upsample_linear(std::span<const double> raw, std::size_t length) {
    if (raw.empty() || length == 0) throw ShapeError("upsample_linear: empty input or output");
    std::vector<double> out(length, raw[0]);
    if (raw.size() == 1 || length == 1) return out;
    const double scale = static_cast<double>(raw.size() - 1) / static_cast<double>(length - 1);
    for (std::size_t i = 0; i < length; ++i) {
        const double pos = static_cast<double>(i) * scale;
        const std::size_t j = std::min(static_cast<std::size_t>(pos), raw.size() - 2);
        const double frac = pos - static_cast<double>(j);
        out[i] = raw[j] + frac * (raw[j + 1] - raw[j]);
    }
    out.back() = raw.back();
    return out;
}

std::vector<double> normalize_unit(std::span<const double> values) {
    if (values.empty()) return {};
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double min = *lo;
    const double range = *hi - min;
    std::vector<double> out(values.size(), 0.5);
    if (range > 0.0) {
        for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - min) / range;
    }
    return out;
}

Upsampled upsample_normalize(std::span<const double> raw) {
    if (raw.size() != kCamLength) {
        throw ShapeError("upsample_normalize: expected " + std::to_string(kCamLength) + " values, got " +
                         std::to_string(raw.size()));
    }
    Upsampled u;
    u.upsampled = upsample_linear(raw, io::kWindowLength);
    u.overlay = normalize_unit(u.upsampled);
    return u;
}

Cam cam_for_window(const models::CamNetModel& model, std::span<const double> samples, io::RhythmClass cls) {
    require_equal_length(samples.size(), model.config().input_length, "cam_for_window");
    ad::Tape tape = ad::Tape::inference();
    const ad::Tensor x({samples.size()}, std::vector<double>(samples.begin(), samples.end()));
    const auto trace = model.forward(tape, x, models::Mode::eval);
    const std::size_t K = trace.features.dim(0);
    const auto w = model.class_weights().values();
    const std::size_t c = static_cast<std::size_t>(io::class_index(cls));
    Cam cam;
    cam.cls = cls;
    cam.raw = compute_cam(trace.features, w.subspan(c * K, K));
    auto up = upsample_normalize(cam.raw);
    cam.upsampled = std::move(up.upsampled);
    cam.overlay = std::move(up.overlay);
    return cam;
}

std::string_view convention_name(Convention c) { return c == Convention::deletion ? "deletion" : "literal"; }

Convention parse_convention(std::string_view name) {
    if (name == "deletion") return Convention::deletion;
    if (name == "literal") return Convention::literal;
    throw ConfigError("unknown mask convention '" + std::string(name) + "' (expected deletion or literal)");
}

std::vector<double> perturb(std::span<const double> x, std::span<const double> m, double k, Convention convention) {
    require_equal_length(x.size(), m.size(), "perturb");
    std::vector<double> out(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) {
        const double keep = 1.0 - m[t];
        out[t] = convention == Convention::deletion ? keep * x[t] + k * m[t] : keep * x[t] + k * keep;
    }
    return out;
}

void MaskConfig::validate() const {
    if (!(lambda1 > 0.0) || !(lambda2 > 0.0) || !(learning_rate > 0.0)) {
        throw ConfigError("mask: lambda1, lambda2 and the step size must be positive");
    }
    if (iterations == 0) throw ConfigError("mask: at least one iteration is required");
}

TargetNetwork lstm_path(const models::ClassifierModel& model, std::span<const double> x) {
    ad::Tape tape = ad::Tape::inference();
    const ad::Tensor clean({x.size()}, std::vector<double>(x.begin(), x.end()));
    const ad::Tensor z1 = model.cnn_features(tape, clean, models::Mode::eval).detach();
    return [&model, z1](ad::Tape& t, const ad::Tensor& input) {
        return model.head(t, z1, model.lstm_features(t, input));
    };
}

LossTerms mask_loss(const TargetNetwork& net, std::span<const double> x, std::span<const double> m,
                    std::size_t target, const MaskConfig& config, std::vector<double>* grad) {
    require_equal_length(x.size(), m.size(), "mask_loss");
    const std::size_t T = x.size();
    const bool deletion = config.convention == Convention::deletion;

    // phi = base + m * slope, elementwise.
    std::vector<double> base(T);
    std::vector<double> slope(T);
    for (std::size_t t = 0; t < T; ++t) {
        base[t] = deletion ? x[t] : x[t] + config.k;
        slope[t] = deletion ? config.k - x[t] : -(x[t] + config.k);
    }
    ad::Tape tape = grad ? ad::Tape() : ad::Tape::inference();
    ad::Tensor mt({T}, std::vector<double>(m.begin(), m.end()), grad != nullptr);
    const ad::Tensor phi =
        ad::add(tape, ad::elementwise_mul(tape, mt, ad::Tensor({T}, std::move(slope))), ad::Tensor({T}, std::move(base)));
    const ad::Tensor logits = net(tape, phi);
    if (target >= logits.size()) throw ContractError("mask_loss: target class out of range");
    ad::Tensor p = ad::pick(tape, ad::softmax(tape, logits), target);

    LossTerms terms;
    for (std::size_t t = 0; t < T; ++t) terms.term1 += deletion ? m[t] : 1.0 - m[t];
    terms.term1 *= config.lambda1;
    for (std::size_t t = 0; t + 1 < T; ++t) terms.term2 += std::abs(m[t + 1] - m[t]);
    terms.term2 *= config.lambda2;
    terms.term3 = p.item();
    terms.total = terms.term1 + terms.term2 + terms.term3;

    if (grad) {
        grad->assign(T, 0.0);
        if (p.requires_grad()) {
            tape.backward(p);
            const auto g = mt.grad();
            std::copy(g.begin(), g.end(), grad->begin());
        }
        const double d1 = deletion ? config.lambda1 : -config.lambda1;
        for (std::size_t t = 0; t < T; ++t) (*grad)[t] += d1;
        for (std::size_t t = 0; t + 1 < T; ++t) {
            const double s = config.lambda2 * sign(m[t + 1] - m[t]);
            (*grad)[t + 1] += s;
            (*grad)[t] -= s;
        }
    }
    return terms;
}

MaskState optimize_mask(const TargetNetwork& net, std::span<const double> x, std::size_t target,
                        const MaskConfig& config) {
    config.validate();
    MaskState state;
    {
        ad::Tape tape = ad::Tape::inference();
        const ad::Tensor clean({x.size()}, std::vector<double>(x.begin(), x.end()));
        const ad::Tensor logits = net(tape, clean);
        state.predicted = training::argmax(logits.values());
    }
    if (state.predicted != target) {
        state.warning = "network predicts class " + std::to_string(state.predicted) + ", optimising against class " +
                        std::to_string(target);
    }
    state.m.assign(x.size(), 0.0);
    std::vector<double> grad;
    for (std::size_t it = 0; it < config.iterations; ++it) {
        const LossTerms terms = mask_loss(net, x, state.m, target, config, &grad);
        if (!std::isfinite(terms.total)) {
            throw NumericError("mask objective is not finite at iteration " + std::to_string(it));
        }
        state.history.push_back(terms);
        for (std::size_t t = 0; t < state.m.size(); ++t) {
            state.m[t] = std::clamp(state.m[t] - config.learning_rate * grad[t], 0.0, 1.0);
        }
    }
    state.final = mask_loss(net, x, state.m, target, config);
    if (!std::isfinite(state.final.total)) {
        throw NumericError("mask objective is not finite at iteration " + std::to_string(config.iterations));
    }
    return state;
}

std::vector<double> saliency_from_mask(std::span<const double> m, Convention convention) {
    if (convention == Convention::deletion) return normalize_unit(m);
    std::vector<double> kept(m.size());
    for (std::size_t t = 0; t < m.size(); ++t) kept[t] = 1.0 - m[t];
    return normalize_unit(kept);
}

double top_decile_fraction(std::span<const double> overlay, std::span<const synth::Interval> truth) {
    std::vector<std::size_t> order(overlay.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return overlay[a] > overlay[b]; });
    const std::size_t count = std::max<std::size_t>(1, overlay.size() / 10);
    double mass = 0.0;
    double inside = 0.0;
    for (std::size_t i = 0; i < count && i < order.size(); ++i) {
        const std::size_t t = order[i];
        mass += overlay[t];
        if (std::any_of(truth.begin(), truth.end(), [t](const synth::Interval& iv) { return iv.contains(t); })) {
            inside += overlay[t];
        }
    }
    return mass > 0.0 ? inside / mass : 0.0;
}

}  // namespace ecgsal::saliency
