#pragma once

#include <functional>

#include "wseg/core.hpp"

namespace wseg {

// Fully-connected pairwise CRF with a Gaussian spatial kernel plus a
// bilateral (position + color) kernel, Potts compatibility. Defaults are
// config-overridable working values; iterations = 10 matches the usual
// test-time setting.
struct CrfParams {
    double w_spatial = 3.0;
    double theta_gamma = 3.0;   // spatial bandwidth, pixels
    double w_bilateral = 5.0;
    double theta_alpha = 30.0;  // bilateral spatial bandwidth, pixels
    double theta_beta = 0.1;    // bilateral color bandwidth, channel units in [0,1]
    int iterations = 10;
};

// Called after each mean-field iteration with the normalized Q; lets tests
// instrument per-iteration drift without a second inference path.
using CrfIterationObserver = std::function<void(int iteration, const ProbMap& q)>;

// Mean-field inference by exact O(N^2) message passing (every pixel pair,
// no lattice approximation). Q0 is the unary softmax; each iteration
// computes, per pixel i and label l,
//   message(i,l) = sum_{j != i} k(i,j) Q_j(l)
//   Q_i(l) ∝ exp(unary_i(l) - sum_{l' != l} message(i,l'))
// and renormalizes per pixel. Message accumulation runs in row-major pixel
// order so results do not depend on the parallel schedule.
ProbMap mean_field(const ScoreMap& unary, const Image& image, const CrfParams& params,
                   const CrfIterationObserver& observer = {});

// argmax of mean_field output.
LabelMap crf_refine(const ScoreMap& scores, const Image& image, const CrfParams& params);

}  // namespace wseg
