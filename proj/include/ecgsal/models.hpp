#pragma once

// The dual-branch arrhythmia classifier (CNN features || LSTM features -> MLP)
// and the miniature GAP network used for class activation maps.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ecgsal/layers.hpp"

namespace ecgsal::models {

/// Channel multiplier k of residual unit `unit`: 1 + unit / units_per_step.
std::size_t channel_multiplier(std::size_t unit, std::size_t units_per_step = 4);

struct ClassifierConfig {
    std::size_t input_length = 720;
    std::vector<std::size_t> inception_kernels{15, 17, 19, 21};
    std::size_t branch_channels = 32;
    std::size_t base_channels = 64;
    std::size_t residual_units = 15;
    std::size_t residual_kernel = 16;
    std::size_t units_per_step = 4;
    std::size_t stem_pool = 1;                // max-pool after the inception block
    std::vector<std::size_t> unit_pools;      // one entry per residual unit
    std::size_t feature_channels = 64;        // 1-wide projection before flattening
    std::size_t lstm_step = 72;
    std::size_t lstm_hidden = 40;
    std::vector<std::size_t> fc_hidden{128, 32};
    std::size_t classes = 8;

    /// 15 residual units, 64 x k channels, CNN features 64 x 10 = 640.
    static ClassifierConfig paper_scale();
    /// 8 residual units, 16 x k channels, CNN features 16 x 10 = 160.
    static ClassifierConfig desk_scale();

    void validate() const;
    std::size_t feature_length() const;
    std::size_t cnn_features() const { return feature_channels * feature_length(); }
    std::size_t lstm_steps() const { return input_length / lstm_step; }
};

struct ClassifierTrace {
    ad::Tensor z1;      // CNN branch features
    ad::Tensor z2;      // LSTM branch features
    ad::Tensor z3;      // logits
    ad::Tensor probs;   // softmax(z3)
};

class ClassifierModel {
public:
    ClassifierModel(ClassifierConfig config, std::uint64_t seed);

    /// input: [720] or [N, 720].
    ClassifierTrace forward(ad::Tape& tape, const ad::Tensor& input, Mode mode) const;
    ad::Tensor logits(ad::Tape& tape, const ad::Tensor& input, Mode mode) const {
        return forward(tape, input, mode).z3;
    }

    ad::Tensor cnn_features(ad::Tape& tape, const ad::Tensor& input, Mode mode) const;
    ad::Tensor lstm_features(ad::Tape& tape, const ad::Tensor& input) const;
    /// F3(z1 || z2).
    ad::Tensor head(ad::Tape& tape, const ad::Tensor& z1, const ad::Tensor& z2) const;

    std::vector<ad::Tensor> parameters() const;
    /// Trainable tensors followed by batch-norm buffers; the checkpoint content.
    ad::NamedTensors state() const;
    const ClassifierConfig& config() const { return config_; }

private:
    ClassifierConfig config_;
    std::vector<Conv1d> inception_;
    std::vector<BatchNorm> inception_bn_;
    Conv1d fuse_;
    std::vector<ResidualUnit> units_;
    Conv1d feature_projection_;
    Lstm lstm_;
    Mlp fc_;
};

struct CamNetConfig {
    std::size_t input_length = 720;
    std::size_t channels = 64;
    std::size_t stem_kernel = 16;
    std::size_t residual_kernel = 16;
    std::vector<std::size_t> unit_pools{3, 1, 5, 1};
    std::size_t units_per_step = 4;
    std::size_t classes = 8;
    std::size_t cam_length = 48;

    static CamNetConfig paper_scale();
    static CamNetConfig desk_scale();
    /// Throws ConfigError unless the pooling schedule maps the input to `cam_length`.
    void validate() const;
    std::size_t feature_channels() const;
};

struct CamTrace {
    ad::Tensor features;  // f: [K, 48] or [N, K, 48]
    ad::Tensor pooled;    // GAP(f)
    ad::Tensor logits;
    ad::Tensor probs;
};

/// Stem conv, residual units, GAP, then one linear map to the class logits.
class CamNetModel {
public:
    CamNetModel(CamNetConfig config, std::uint64_t seed);

    CamTrace forward(ad::Tape& tape, const ad::Tensor& input, Mode mode) const;
    ad::Tensor logits(ad::Tape& tape, const ad::Tensor& input, Mode mode) const {
        return forward(tape, input, mode).logits;
    }

    /// w: [classes, K]; row c holds w_k^c.
    const ad::Tensor& class_weights() const { return classifier_.weight; }
    const ad::Tensor& class_bias() const { return classifier_.bias; }

    std::vector<ad::Tensor> parameters() const;
    ad::NamedTensors state() const;
    const CamNetConfig& config() const { return config_; }

private:
    CamNetConfig config_;
    Conv1d stem_;
    BatchNorm stem_bn_;
    std::vector<ResidualUnit> units_;
    Dense classifier_;
};

/// Views [720] / [N, 720] input as [N, steps, step] for an LSTM.
ad::Tensor as_sequence(ad::Tape& tape, const ad::Tensor& input, std::size_t step);

}  // namespace ecgsal::models
