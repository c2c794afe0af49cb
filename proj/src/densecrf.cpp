#include "wseg/densecrf.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace wseg {

namespace {

// Above this pixel count the N x N kernel matrix is recomputed on the fly
// instead of materialized (same arithmetic, same accumulation order).
constexpr int kMaxPrecomputedPixels = 2500;

void validate(const ScoreMap& unary, const Image& image, const CrfParams& p) {
    if (unary.height != image.height || unary.width != image.width) {
        throw std::invalid_argument("mean_field: unary and image dimensions differ");
    }
    if (!(p.theta_gamma > 0.0) || !(p.theta_alpha > 0.0) || !(p.theta_beta > 0.0)) {
        throw std::invalid_argument("mean_field: kernel bandwidths must be positive");
    }
    if (p.w_spatial < 0.0 || p.w_bilateral < 0.0) {
        throw std::invalid_argument("mean_field: kernel weights must be non-negative");
    }
    if (p.iterations < 0) {
        throw std::invalid_argument("mean_field: iterations must be >= 0");
    }
}

struct KernelEval {
    const Image& image;
    int width;
    double w_spatial, w_bilateral;
    double inv_2gamma2, inv_2alpha2, inv_2beta2;

    KernelEval(const Image& img, const CrfParams& p)
        : image(img), width(img.width),
          w_spatial(p.w_spatial), w_bilateral(p.w_bilateral),
          inv_2gamma2(0.5 / (p.theta_gamma * p.theta_gamma)),
          inv_2alpha2(0.5 / (p.theta_alpha * p.theta_alpha)),
          inv_2beta2(0.5 / (p.theta_beta * p.theta_beta)) {}

    double operator()(int i, int j) const {
        double dx = static_cast<double>(i % width - j % width);
        double dy = static_cast<double>(i / width - j / width);
        double d2 = dx * dx + dy * dy;
        double c2 = 0.0;
        const double* pi = image.pixel(i);
        const double* pj = image.pixel(j);
        for (int c = 0; c < image.channels; ++c) {
            double dc = pi[c] - pj[c];
            c2 += dc * dc;
        }
        return w_spatial * std::exp(-d2 * inv_2gamma2) +
               w_bilateral * std::exp(-d2 * inv_2alpha2 - c2 * inv_2beta2);
    }
};

}  // namespace

ProbMap mean_field(const ScoreMap& unary, const Image& image, const CrfParams& params,
                   const CrfIterationObserver& observer) {
    validate(unary, image, params);

    const int pixels = unary.pixels();
    const int labels = unary.num_labels;

    ProbMap q = pixel_distribution(unary);

    KernelEval kernel(image, params);
    std::vector<double> kernel_matrix;
    const bool precompute = pixels <= kMaxPrecomputedPixels;
    if (precompute && params.iterations > 0) {
        kernel_matrix.resize(static_cast<size_t>(pixels) * pixels);
        for (int i = 0; i < pixels; ++i) {
            for (int j = 0; j < pixels; ++j) {
                kernel_matrix[static_cast<size_t>(i) * pixels + j] = (i == j) ? 0.0 : kernel(i, j);
            }
        }
    }

    ScoreMap exponents(unary.height, unary.width, labels);
    std::vector<double> message(static_cast<size_t>(labels));
    for (int iter = 1; iter <= params.iterations; ++iter) {
        for (int i = 0; i < pixels; ++i) {
            for (int l = 0; l < labels; ++l) message[static_cast<size_t>(l)] = 0.0;
            // j runs in row-major order; self-message excluded
            if (precompute) {
                const double* krow = kernel_matrix.data() + static_cast<size_t>(i) * pixels;
                for (int j = 0; j < pixels; ++j) {
                    double kij = krow[j];
                    const double* qj = &q.at(j, 0);
                    for (int l = 0; l < labels; ++l) message[static_cast<size_t>(l)] += kij * qj[l];
                }
            } else {
                for (int j = 0; j < pixels; ++j) {
                    if (j == i) continue;
                    double kij = kernel(i, j);
                    const double* qj = &q.at(j, 0);
                    for (int l = 0; l < labels; ++l) message[static_cast<size_t>(l)] += kij * qj[l];
                }
            }
            double total = 0.0;
            for (int l = 0; l < labels; ++l) total += message[static_cast<size_t>(l)];
            // Potts penalty: mass on competing labels only
            for (int l = 0; l < labels; ++l) {
                exponents.at(i, l) = unary.at(i, l) - (total - message[static_cast<size_t>(l)]);
            }
        }
        q = pixel_distribution(exponents);
        if (observer) observer(iter, q);
    }
    return q;
}

LabelMap crf_refine(const ScoreMap& scores, const Image& image, const CrfParams& params) {
    return argmax_labels(mean_field(scores, image, params));
}

}  // namespace wseg
