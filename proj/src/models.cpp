#include "ecgsal/models.hpp"

#include "ecgsal/error.hpp"

namespace ecgsal::models {
namespace {

// [720] -> [1, 720]; [N, 720] -> [N, 1, 720].
ad::Tensor as_signal(ad::Tape& tape, const ad::Tensor& input, std::size_t length) {
    if (input.rank() == 1 && input.dim(0) == length) return ad::reshape(tape, input, {1, length});
    if (input.rank() == 2 && input.dim(1) == length) return ad::reshape(tape, input, {input.dim(0), 1, length});
    throw ShapeError("model input must be [" + std::to_string(length) + "] or [N, " + std::to_string(length) +
                     "], got " + ad::to_string(input.shape()));
}

// [C, L] -> [C*L]; [N, C, L] -> [N, C*L].
ad::Tensor flatten(ad::Tape& tape, const ad::Tensor& x) {
    if (x.rank() == 2) return ad::reshape(tape, x, {x.size()});
    return ad::reshape(tape, x, {x.dim(0), x.size() / x.dim(0)});
}

std::size_t reduce_length(std::size_t length, std::size_t pool, const char* what) {
    if (pool == 0 || length % pool != 0) {
        throw ConfigError(std::string(what) + ": pool " + std::to_string(pool) + " does not divide length " +
                          std::to_string(length));
    }
    return length / pool;
}

void append(ad::NamedTensors& dst, const ad::NamedTensors& src) { dst.insert(dst.end(), src.begin(), src.end()); }

}  // namespace

std::size_t channel_multiplier(std::size_t unit, std::size_t units_per_step) { return 1 + unit / units_per_step; }

ad::Tensor as_sequence(ad::Tape& tape, const ad::Tensor& input, std::size_t step) {
    const std::size_t length = input.shape().back();
    if (input.rank() > 2 || step == 0 || length % step != 0) {
        throw ShapeError("as_sequence: cannot split " + ad::to_string(input.shape()) + " into steps of " +
                         std::to_string(step));
    }
    if (input.rank() == 1) return ad::reshape(tape, input, {length / step, step});
    return ad::reshape(tape, input, {input.dim(0), length / step, step});
}

// --- classifier ------------------------------------------------------------

ClassifierConfig ClassifierConfig::paper_scale() {
    ClassifierConfig c;
    c.unit_pools.assign(15, 1);
    c.unit_pools[1] = c.unit_pools[3] = c.unit_pools[5] = 2;
    c.unit_pools[7] = c.unit_pools[9] = 3;
    return c;
}

ClassifierConfig ClassifierConfig::desk_scale() {
    ClassifierConfig c;
    c.branch_channels = 8;
    c.base_channels = 16;
    c.residual_units = 8;
    c.stem_pool = 4;
    c.unit_pools = {2, 1, 3, 1, 3, 1, 1, 1};
    c.feature_channels = 16;
    return c;
}

std::size_t ClassifierConfig::feature_length() const {
    std::size_t len = reduce_length(input_length, stem_pool, "stem");
    for (std::size_t p : unit_pools) len = reduce_length(len, p, "residual unit");
    return len;
}

void ClassifierConfig::validate() const {
    if (inception_kernels.empty() || branch_channels == 0 || base_channels == 0 || feature_channels == 0) {
        throw ConfigError("classifier: empty inception block or zero channel count");
    }
    if (unit_pools.size() != residual_units) {
        throw ConfigError("classifier: " + std::to_string(unit_pools.size()) + " pool entries for " +
                          std::to_string(residual_units) + " residual units");
    }
    if (lstm_step == 0 || input_length % lstm_step != 0) {
        throw ConfigError("classifier: LSTM step " + std::to_string(lstm_step) + " does not divide input length");
    }
    if (units_per_step == 0 || residual_kernel == 0 || classes < 2 || lstm_hidden == 0) {
        throw ConfigError("classifier: invalid layer sizes");
    }
    if (feature_length() == 0) throw ConfigError("classifier: pooling removes the whole signal");
}

ClassifierModel::ClassifierModel(ClassifierConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    Rng rng(seed);
    for (std::size_t k : config_.inception_kernels) {
        inception_.emplace_back(1, config_.branch_channels, k, rng);
        inception_bn_.emplace_back(config_.branch_channels);
    }
    fuse_ = Conv1d(config_.branch_channels * config_.inception_kernels.size(), config_.base_channels, 1, rng);
    std::size_t channels = config_.base_channels;
    for (std::size_t i = 0; i < config_.residual_units; ++i) {
        const std::size_t out = config_.base_channels * channel_multiplier(i, config_.units_per_step);
        units_.emplace_back(channels, out, config_.residual_kernel, config_.unit_pools[i], rng);
        channels = out;
    }
    feature_projection_ = Conv1d(channels, config_.feature_channels, 1, rng);
    lstm_ = Lstm(config_.lstm_step, config_.lstm_hidden, rng);
    fc_ = Mlp(config_.cnn_features() + config_.lstm_hidden, config_.fc_hidden, config_.classes, rng);
}

ad::Tensor ClassifierModel::cnn_features(ad::Tape& tape, const ad::Tensor& input, Mode mode) const {
    const ad::Tensor x = as_signal(tape, input, config_.input_length);
    std::vector<ad::Tensor> branches;
    for (std::size_t i = 0; i < inception_.size(); ++i) {
        branches.push_back(ad::relu(tape, inception_bn_[i](tape, inception_[i](tape, x), mode)));
    }
    ad::Tensor h = fuse_(tape, ad::concat_channels(tape, branches));
    if (config_.stem_pool > 1) h = ad::maxpool1d(tape, h, config_.stem_pool, config_.stem_pool);
    for (const auto& unit : units_) h = unit(tape, h, mode);
    h = ad::relu(tape, feature_projection_(tape, h));
    return flatten(tape, h);
}

ad::Tensor ClassifierModel::lstm_features(ad::Tape& tape, const ad::Tensor& input) const {
    return lstm_(tape, as_sequence(tape, input, config_.lstm_step));
}

ad::Tensor ClassifierModel::head(ad::Tape& tape, const ad::Tensor& z1, const ad::Tensor& z2) const {
    return fc_(tape, ad::concat(tape, z1, z2));
}

ClassifierTrace ClassifierModel::forward(ad::Tape& tape, const ad::Tensor& input, Mode mode) const {
    ClassifierTrace tr;
    tr.z1 = cnn_features(tape, input, mode);
    tr.z2 = lstm_features(tape, input);
    tr.z3 = head(tape, tr.z1, tr.z2);
    tr.probs = ad::softmax(tape, tr.z3);
    return tr;
}

ad::NamedTensors ClassifierModel::state() const {
    ParameterRegistry reg;
    for (std::size_t i = 0; i < inception_.size(); ++i) {
        inception_[i].collect("cnn.inception." + std::to_string(i), reg);
        inception_bn_[i].collect("cnn.inception_bn." + std::to_string(i), reg);
    }
    fuse_.collect("cnn.fuse", reg);
    for (std::size_t i = 0; i < units_.size(); ++i) units_[i].collect("cnn.unit." + std::to_string(i), reg);
    feature_projection_.collect("cnn.features", reg);
    lstm_.collect("lstm", reg);
    fc_.collect("fc", reg);
    ad::NamedTensors out = reg.trainable;
    append(out, reg.buffers);
    return out;
}

std::vector<ad::Tensor> ClassifierModel::parameters() const {
    std::vector<ad::Tensor> out;
    for (const auto& [_, t] : state()) {
        if (t.requires_grad()) out.push_back(t);
    }
    return out;
}

// --- CAM network -------------------------------------------------------------

CamNetConfig CamNetConfig::paper_scale() { return CamNetConfig{}; }

CamNetConfig CamNetConfig::desk_scale() {
    CamNetConfig c;
    c.channels = 8;
    return c;
}

std::size_t CamNetConfig::feature_channels() const {
    return channels * channel_multiplier(unit_pools.empty() ? 0 : unit_pools.size() - 1, units_per_step);
}

void CamNetConfig::validate() const {
    if (channels == 0 || classes < 2 || units_per_step == 0) throw ConfigError("camnet: invalid layer sizes");
    std::size_t len = input_length;
    for (std::size_t p : unit_pools) len = reduce_length(len, p, "camnet unit");
    if (len != cam_length) {
        throw ConfigError("camnet: pooling schedule maps " + std::to_string(input_length) + " samples to " +
                          std::to_string(len) + ", expected " + std::to_string(cam_length));
    }
}

CamNetModel::CamNetModel(CamNetConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    Rng rng(seed);
    stem_ = Conv1d(1, config_.channels, config_.stem_kernel, rng);
    stem_bn_ = BatchNorm(config_.channels);
    std::size_t channels = config_.channels;
    for (std::size_t i = 0; i < config_.unit_pools.size(); ++i) {
        const std::size_t out = config_.channels * channel_multiplier(i, config_.units_per_step);
        units_.emplace_back(channels, out, config_.residual_kernel, config_.unit_pools[i], rng);
        channels = out;
    }
    classifier_ = Dense(channels, config_.classes, rng);
}

CamTrace CamNetModel::forward(ad::Tape& tape, const ad::Tensor& input, Mode mode) const {
    ad::Tensor h = as_signal(tape, input, config_.input_length);
    h = ad::relu(tape, stem_bn_(tape, stem_(tape, h), mode));
    for (const auto& unit : units_) h = unit(tape, h, mode);
    CamTrace tr;
    tr.features = h;
    tr.pooled = ad::gap(tape, h);
    tr.logits = classifier_(tape, tr.pooled);
    tr.probs = ad::softmax(tape, tr.logits);
    return tr;
}

ad::NamedTensors CamNetModel::state() const {
    ParameterRegistry reg;
    stem_.collect("cam.stem", reg);
    stem_bn_.collect("cam.stem_bn", reg);
    for (std::size_t i = 0; i < units_.size(); ++i) units_[i].collect("cam.unit." + std::to_string(i), reg);
    classifier_.collect("cam.classifier", reg);
    ad::NamedTensors out = reg.trainable;
    append(out, reg.buffers);
    return out;
}

std::vector<ad::Tensor> CamNetModel::parameters() const {
    std::vector<ad::Tensor> out;
    for (const auto& [_, t] : state()) {
        if (t.requires_grad()) out.push_back(t);
    }
    return out;
}

}  // namespace ecgsal::models
