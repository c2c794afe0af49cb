#include "wseg/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "wseg/common.hpp"

namespace wseg {

namespace {

// Channel-major working buffer: plane c occupies [c*H*W, (c+1)*H*W).
using Planes = std::vector<double>;

Planes image_to_planes(const Image& image) {
    const int hw = image.pixels();
    Planes planes(static_cast<size_t>(image.channels) * hw);
    for (int m = 0; m < hw; ++m) {
        const double* px = image.pixel(m);
        for (int c = 0; c < image.channels; ++c) {
            planes[static_cast<size_t>(c) * hw + m] = px[c];
        }
    }
    return planes;
}

// pre[o](y,x) = bias[o] + sum_{i,dy,dx} w[o][i][dy][dx] * in[i](y+dy-r, x+dx-r)
// with zero padding; optional ReLU on the result.
Planes conv_forward(const Planes& in, int height, int width, const LayerShape& layer,
                    const double* theta, bool apply_relu) {
    const int hw = height * width;
    const int k = layer.kernel;
    const int r = k / 2;
    Planes out(static_cast<size_t>(layer.out_channels) * hw, 0.0);
    const double* weights = theta + layer.weight_offset;
    const double* biases = theta + layer.bias_offset;
    for (int o = 0; o < layer.out_channels; ++o) {
        double* out_plane = out.data() + static_cast<size_t>(o) * hw;
        for (int m = 0; m < hw; ++m) out_plane[m] = biases[o];
        for (int i = 0; i < layer.in_channels; ++i) {
            const double* in_plane = in.data() + static_cast<size_t>(i) * hw;
            const double* w = weights + (static_cast<size_t>(o) * layer.in_channels + i) *
                                            static_cast<size_t>(k) * k;
            for (int dy = 0; dy < k; ++dy) {
                int oy = dy - r;
                int y_lo = std::max(0, -oy);
                int y_hi = std::min(height, height - oy);
                for (int dx = 0; dx < k; ++dx) {
                    int ox = dx - r;
                    int x_lo = std::max(0, -ox);
                    int x_hi = std::min(width, width - ox);
                    double wv = w[dy * k + dx];
                    if (wv == 0.0) continue;
                    for (int y = y_lo; y < y_hi; ++y) {
                        const double* src = in_plane + static_cast<size_t>(y + oy) * width + ox;
                        double* dst = out_plane + static_cast<size_t>(y) * width;
                        for (int x = x_lo; x < x_hi; ++x) dst[x] += wv * src[x];
                    }
                }
            }
        }
        if (apply_relu) {
            for (int m = 0; m < hw; ++m) {
                if (out_plane[m] < 0.0) out_plane[m] = 0.0;
            }
        }
    }
    return out;
}

// Given d(out) for a layer, accumulates dw/db into grad and returns d(in).
// relu_mask, when set, is the layer's own output (post-ReLU): zero entries
// gate the gradient.
Planes conv_backward(const Planes& in, const Planes& dout_raw, const Planes* relu_output,
                     int height, int width, const LayerShape& layer, const double* theta,
                     double* grad) {
    const int hw = height * width;
    const int k = layer.kernel;
    const int r = k / 2;

    Planes dpre = dout_raw;
    if (relu_output) {
        for (size_t idx = 0; idx < dpre.size(); ++idx) {
            if ((*relu_output)[idx] <= 0.0) dpre[idx] = 0.0;
        }
    }

    const double* weights = theta + layer.weight_offset;
    double* dweights = grad + layer.weight_offset;
    double* dbiases = grad + layer.bias_offset;
    Planes din(static_cast<size_t>(layer.in_channels) * hw, 0.0);

    for (int o = 0; o < layer.out_channels; ++o) {
        const double* dpre_plane = dpre.data() + static_cast<size_t>(o) * hw;
        for (int m = 0; m < hw; ++m) dbiases[o] += dpre_plane[m];
        for (int i = 0; i < layer.in_channels; ++i) {
            const double* in_plane = in.data() + static_cast<size_t>(i) * hw;
            double* din_plane = din.data() + static_cast<size_t>(i) * hw;
            size_t wbase = (static_cast<size_t>(o) * layer.in_channels + i) *
                           static_cast<size_t>(k) * k;
            for (int dy = 0; dy < k; ++dy) {
                int oy = dy - r;
                int y_lo = std::max(0, -oy);
                int y_hi = std::min(height, height - oy);
                for (int dx = 0; dx < k; ++dx) {
                    int ox = dx - r;
                    int x_lo = std::max(0, -ox);
                    int x_hi = std::min(width, width - ox);
                    double wv = weights[wbase + static_cast<size_t>(dy) * k + dx];
                    double dw = 0.0;
                    for (int y = y_lo; y < y_hi; ++y) {
                        const double* src = in_plane + static_cast<size_t>(y + oy) * width + ox;
                        double* dsrc = din_plane + static_cast<size_t>(y + oy) * width + ox;
                        const double* g = dpre_plane + static_cast<size_t>(y) * width;
                        for (int x = x_lo; x < x_hi; ++x) {
                            dw += g[x] * src[x];
                            dsrc[x] += wv * g[x];
                        }
                    }
                    dweights[wbase + static_cast<size_t>(dy) * k + dx] += dw;
                }
            }
        }
    }
    return din;
}

struct ForwardCache {
    // activations[0] = input planes; activations[i+1] = output of layer i
    // (post-ReLU for hidden layers).
    std::vector<Planes> activations;
};

ForwardCache forward_cached(const NetParams& net, const Image& image) {
    if (image.channels != net.config.in_channels) {
        throw std::invalid_argument("forward: image has " + std::to_string(image.channels) +
                                    " channels, net expects " +
                                    std::to_string(net.config.in_channels));
    }
    int max_kernel = 1;
    for (const LayerShape& l : net.layers) max_kernel = std::max(max_kernel, l.kernel);
    if (image.height < max_kernel || image.width < max_kernel) {
        throw std::invalid_argument("forward: image smaller than the largest kernel");
    }
    ForwardCache cache;
    cache.activations.reserve(net.layers.size() + 1);
    cache.activations.push_back(image_to_planes(image));
    for (const LayerShape& layer : net.layers) {
        cache.activations.push_back(conv_forward(cache.activations.back(), image.height,
                                                 image.width, layer, net.theta.data(),
                                                 layer.relu));
    }
    return cache;
}

}  // namespace

void validate_net_config(const NetConfig& cfg) {
    if (cfg.in_channels < 1) throw ConfigError("net: in_channels must be >= 1");
    if (cfg.num_labels < 1) throw ConfigError("net: num_labels must be >= 1");
    if (cfg.hidden_channels.size() != cfg.kernel_sizes.size()) {
        throw ConfigError("net: hidden_channels and kernel_sizes lengths differ");
    }
    for (size_t i = 0; i < cfg.hidden_channels.size(); ++i) {
        if (cfg.hidden_channels[i] < 1) throw ConfigError("net: channel counts must be >= 1");
        int k = cfg.kernel_sizes[i];
        if (k < 1 || k % 2 == 0) throw ConfigError("net: kernel sizes must be odd and >= 1");
    }
}

NetParams init_net(const NetConfig& cfg) {
    validate_net_config(cfg);
    NetParams net;
    net.config = cfg;

    size_t offset = 0;
    int prev = cfg.in_channels;
    auto push_layer = [&](int out_ch, int kernel, bool relu) {
        LayerShape layer;
        layer.in_channels = prev;
        layer.out_channels = out_ch;
        layer.kernel = kernel;
        layer.relu = relu;
        layer.weight_offset = offset;
        offset += static_cast<size_t>(out_ch) * prev * kernel * kernel;
        layer.bias_offset = offset;
        offset += static_cast<size_t>(out_ch);
        net.layers.push_back(layer);
        prev = out_ch;
    };
    for (size_t i = 0; i < cfg.hidden_channels.size(); ++i) {
        push_layer(cfg.hidden_channels[i], cfg.kernel_sizes[i], true);
    }
    push_layer(cfg.num_labels, 1, false);

    net.theta.assign(offset, 0.0);
    Rng rng(cfg.seed);
    for (const LayerShape& layer : net.layers) {
        double fan_in = static_cast<double>(layer.in_channels) * layer.kernel * layer.kernel;
        double limit = std::sqrt(6.0 / fan_in);
        size_t weight_count = static_cast<size_t>(layer.out_channels) * layer.in_channels *
                              layer.kernel * layer.kernel;
        for (size_t i = 0; i < weight_count; ++i) {
            net.theta[layer.weight_offset + i] = (rng.next_double() * 2.0 - 1.0) * limit;
        }
        // biases stay zero
    }
    return net;
}

ScoreMap forward(const NetParams& net, const Image& image) {
    ForwardCache cache = forward_cached(net, image);
    const Planes& out = cache.activations.back();
    const int hw = image.pixels();
    const int labels = net.config.num_labels;
    ScoreMap scores(image.height, image.width, labels);
    for (int m = 0; m < hw; ++m) {
        for (int l = 0; l < labels; ++l) {
            scores.at(m, l) = out[static_cast<size_t>(l) * hw + m];
        }
    }
    return scores;
}

LossGrad loss_and_grad(const NetParams& net, const Image& image, const LabelMap& target,
                       const std::vector<uint8_t>& ignore_mask) {
    if (target.height != image.height || target.width != image.width) {
        throw std::invalid_argument("loss_and_grad: target dimensions differ from image");
    }
    const int hw = image.pixels();
    if (!ignore_mask.empty() && static_cast<int>(ignore_mask.size()) != hw) {
        throw std::invalid_argument("loss_and_grad: ignore mask size mismatch");
    }
    const int labels = net.config.num_labels;

    ForwardCache cache = forward_cached(net, image);
    const Planes& out = cache.activations.back();

    int valid = 0;
    for (int m = 0; m < hw; ++m) {
        if (ignore_mask.empty() || !ignore_mask[static_cast<size_t>(m)]) ++valid;
    }
    if (valid == 0) throw std::invalid_argument("loss_and_grad: every pixel is ignored");

    // Per-pixel softmax + NLL, gradient (p - onehot)/valid at valid pixels.
    LossGrad result;
    result.grad.assign(net.theta.size(), 0.0);
    Planes dscores(static_cast<size_t>(labels) * hw, 0.0);
    double loss = 0.0;
    const double inv_valid = 1.0 / static_cast<double>(valid);
    std::vector<double> p(static_cast<size_t>(labels));
    for (int m = 0; m < hw; ++m) {
        if (!ignore_mask.empty() && ignore_mask[static_cast<size_t>(m)]) continue;
        int t = target.labels[static_cast<size_t>(m)];
        if (t < 0 || t >= labels) {
            throw std::invalid_argument("loss_and_grad: target label out of range");
        }
        double max_score = out[m];
        for (int l = 1; l < labels; ++l) {
            max_score = std::max(max_score, out[static_cast<size_t>(l) * hw + m]);
        }
        double sum = 0.0;
        for (int l = 0; l < labels; ++l) {
            p[static_cast<size_t>(l)] = std::exp(out[static_cast<size_t>(l) * hw + m] - max_score);
            sum += p[static_cast<size_t>(l)];
        }
        loss -= std::log(p[static_cast<size_t>(t)] / sum);
        for (int l = 0; l < labels; ++l) {
            double soft = p[static_cast<size_t>(l)] / sum;
            dscores[static_cast<size_t>(l) * hw + m] =
                (soft - (l == t ? 1.0 : 0.0)) * inv_valid;
        }
    }
    result.loss = loss * inv_valid;

    Planes grad_out = std::move(dscores);
    for (size_t li = net.layers.size(); li-- > 0;) {
        const LayerShape& layer = net.layers[li];
        const Planes* relu_output = layer.relu ? &cache.activations[li + 1] : nullptr;
        grad_out = conv_backward(cache.activations[li], grad_out, relu_output, image.height,
                                 image.width, layer, net.theta.data(), result.grad.data());
    }
    return result;
}

void sgd_update(std::vector<double>& params, std::vector<double>& velocity,
                const std::vector<double>& grad, double lr, double momentum,
                double weight_decay) {
    if (params.size() != velocity.size() || params.size() != grad.size()) {
        throw std::invalid_argument("sgd_update: shape mismatch");
    }
    for (size_t i = 0; i < params.size(); ++i) {
        velocity[i] = momentum * velocity[i] - lr * (grad[i] + weight_decay * params[i]);
        params[i] += velocity[i];
    }
}

void sgd_update(std::vector<double>& params, std::vector<double>& velocity,
                const std::vector<double>& grad, double lr, double momentum,
                double weight_decay, const std::vector<double>& lr_scale) {
    if (params.size() != velocity.size() || params.size() != grad.size() ||
        params.size() != lr_scale.size()) {
        throw std::invalid_argument("sgd_update: shape mismatch");
    }
    for (size_t i = 0; i < params.size(); ++i) {
        velocity[i] = momentum * velocity[i] - lr * lr_scale[i] * (grad[i] + weight_decay * params[i]);
        params[i] += velocity[i];
    }
}

std::vector<double> head_lr_scale(const NetParams& net, double head_multiplier) {
    std::vector<double> scale(net.theta.size(), 1.0);
    const LayerShape& head = net.head();
    for (size_t i = head.weight_offset; i < net.theta.size(); ++i) scale[i] = head_multiplier;
    return scale;
}

namespace {

void put_u32(std::string& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& buf, uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::string& buf, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_u64(buf, bits);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    explicit Reader(const std::string& b) : buf(b) {}
    uint8_t byte() {
        if (pos >= buf.size()) throw DataError("checkpoint truncated");
        return static_cast<uint8_t>(buf[pos++]);
    }
    uint32_t u32() {
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(byte()) << (8 * i);
        return v;
    }
    uint64_t u64() {
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(byte()) << (8 * i);
        return v;
    }
    double f64() {
        uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }
};

constexpr uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const NetParams& net, const std::string& path) {
    std::string buf;
    buf += "WSEG";
    put_u32(buf, kCheckpointVersion);
    put_u32(buf, static_cast<uint32_t>(net.config.in_channels));
    put_u32(buf, static_cast<uint32_t>(net.config.num_labels));
    put_u32(buf, static_cast<uint32_t>(net.config.hidden_channels.size()));
    for (size_t i = 0; i < net.config.hidden_channels.size(); ++i) {
        put_u32(buf, static_cast<uint32_t>(net.config.hidden_channels[i]));
        put_u32(buf, static_cast<uint32_t>(net.config.kernel_sizes[i]));
    }
    put_u64(buf, net.config.seed);
    put_u64(buf, static_cast<uint64_t>(net.theta.size()));
    for (double v : net.theta) put_f64(buf, v);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("failed writing checkpoint: " + path);
}

NetParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Reader r(buf);
    if (buf.size() < 4 || buf.compare(0, 4, "WSEG") != 0) {
        throw DataError("not a checkpoint file (bad magic): " + path);
    }
    r.pos = 4;
    uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    }
    NetConfig cfg;
    cfg.in_channels = static_cast<int>(r.u32());
    cfg.num_labels = static_cast<int>(r.u32());
    uint32_t hidden = r.u32();
    for (uint32_t i = 0; i < hidden; ++i) {
        cfg.hidden_channels.push_back(static_cast<int>(r.u32()));
        cfg.kernel_sizes.push_back(static_cast<int>(r.u32()));
    }
    cfg.seed = r.u64();

    NetParams net = init_net(cfg);
    uint64_t count = r.u64();
    if (count != net.theta.size()) {
        throw DataError("checkpoint parameter count mismatch");
    }
    for (size_t i = 0; i < net.theta.size(); ++i) net.theta[i] = r.f64();
    return net;
}

}  // namespace wseg
