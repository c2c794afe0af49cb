#include "wseg/core.hpp"

#include <cmath>
#include <stdexcept>

namespace wseg {

void validate_boxes(const BoxAnnotation& ann, int height, int width) {
    for (const Box& b : ann.boxes) {
        if (b.cls < 1) {
            throw std::invalid_argument("box class must be >= 1, got " + std::to_string(b.cls));
        }
        if (b.x0 > b.x1 || b.y0 > b.y1) {
            throw std::invalid_argument("degenerate box: x0/y0 must not exceed x1/y1");
        }
        if (b.x0 < 0 || b.y0 < 0 || b.x1 >= width || b.y1 >= height) {
            throw std::invalid_argument("box out of image bounds");
        }
    }
}

ProbMap pixel_distribution(const ScoreMap& scores) {
    const int pixels = scores.pixels();
    const int labels = scores.num_labels;
    ProbMap out(scores.height, scores.width, labels);
    for (int m = 0; m < pixels; ++m) {
        const double* row = scores.pixel_scores(m);
        double max_score = row[0];
        for (int l = 0; l < labels; ++l) {
            if (!std::isfinite(row[l])) {
                throw std::invalid_argument("pixel_distribution: non-finite score at pixel " +
                                            std::to_string(m));
            }
            if (row[l] > max_score) max_score = row[l];
        }
        double sum = 0.0;
        double* q = &out.at(m, 0);
        for (int l = 0; l < labels; ++l) {
            q[l] = std::exp(row[l] - max_score);
            sum += q[l];
        }
        for (int l = 0; l < labels; ++l) q[l] /= sum;
    }
    return out;
}

namespace {

template <typename MapT>
LabelMap argmax_impl(const MapT& map) {
    const int pixels = map.pixels();
    const int labels = map.num_labels;
    LabelMap out(map.height, map.width);
    for (int m = 0; m < pixels; ++m) {
        int best = 0;
        for (int l = 1; l < labels; ++l) {
            if (map.at(m, l) > map.at(m, best)) best = l;  // strict: ties keep the lower index
        }
        out.labels[static_cast<size_t>(m)] = best;
    }
    return out;
}

}  // namespace

LabelMap argmax_labels(const ScoreMap& scores) { return argmax_impl(scores); }
LabelMap argmax_labels(const ProbMap& probs) { return argmax_impl(probs); }

}  // namespace wseg
