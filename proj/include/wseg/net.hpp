#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wseg/core.hpp"

namespace wseg {

// A small per-pixel classifier: stacked same-padding convolutions with ReLU,
// topped by a linear 1x1 head producing one score per label. Spatial dims
// are preserved end to end.
struct NetConfig {
    int in_channels = 3;
    std::vector<int> hidden_channels;  // may be empty (head only)
    std::vector<int> kernel_sizes;     // parallel to hidden_channels, odd
    int num_labels = 2;
    uint64_t seed = 0;
};

struct LayerShape {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 1;           // odd
    bool relu = false;        // hidden layers only; the head stays linear
    size_t weight_offset = 0; // weights laid out [out][in][ky][kx]
    size_t bias_offset = 0;   // biases laid out [out]
};

struct NetParams {
    NetConfig config;
    std::vector<LayerShape> layers;  // hidden layers followed by the 1x1 head
    std::vector<double> theta;       // all weights and biases, flat

    size_t size() const { return theta.size(); }
    const LayerShape& head() const { return layers.back(); }
};

// Builds the layer table and draws He-style fan-in-scaled uniform weights
// (biases zero) from cfg.seed. Deterministic.
NetParams init_net(const NetConfig& cfg);

// Validates a config without building parameters. Throws ConfigError.
void validate_net_config(const NetConfig& cfg);

ScoreMap forward(const NetParams& net, const Image& image);

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;  // same layout as theta
};

// Negative mean log-likelihood of the target labels over non-ignored pixels
// plus the exact reverse-mode gradient. ignore_mask may be empty (nothing
// ignored) or one byte per pixel (nonzero = ignored). Throws if every pixel
// is ignored.
LossGrad loss_and_grad(const NetParams& net, const Image& image, const LabelMap& target,
                       const std::vector<uint8_t>& ignore_mask = {});

// v' = momentum * v - lr * (grad + weight_decay * params); params += v'.
void sgd_update(std::vector<double>& params, std::vector<double>& velocity,
                const std::vector<double>& grad, double lr, double momentum,
                double weight_decay);

// Same update with a per-coordinate learning-rate multiplier.
void sgd_update(std::vector<double>& params, std::vector<double>& velocity,
                const std::vector<double>& grad, double lr, double momentum,
                double weight_decay, const std::vector<double>& lr_scale);

// 1.0 for every coordinate except the final classifier layer, which gets
// head_multiplier (the usual x10 for a freshly initialized head).
std::vector<double> head_lr_scale(const NetParams& net, double head_multiplier);

// Checkpoint: little-endian binary, magic "WSEG", u32 format version,
// config block, then theta as f64.
void save_checkpoint(const NetParams& net, const std::string& path);
NetParams load_checkpoint(const std::string& path);

}  // namespace wseg
