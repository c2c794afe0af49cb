#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "wseg/common.hpp"

namespace wseg {

// Per-pixel, per-label real scores (the classifier head output). Layout is
// pixel-major: one pixel's label vector is contiguous, since every E-step is
// a per-pixel scan over labels. Label 0 is always background.
struct ScoreMap {
    int height = 0;
    int width = 0;
    int num_labels = 0;
    std::vector<double> data;

    ScoreMap() = default;
    ScoreMap(int h, int w, int labels, double fill = 0.0)
        : height(h), width(w), num_labels(labels),
          data(static_cast<size_t>(h) * w * labels, fill) {}

    int pixels() const { return height * width; }
    double& at(int pixel, int label) {
        return data[static_cast<size_t>(pixel) * num_labels + label];
    }
    double at(int pixel, int label) const {
        return data[static_cast<size_t>(pixel) * num_labels + label];
    }
    const double* pixel_scores(int pixel) const {
        return data.data() + static_cast<size_t>(pixel) * num_labels;
    }
};

// Same shape as ScoreMap; each pixel's row is a categorical distribution
// (non-negative, sums to 1).
struct ProbMap {
    int height = 0;
    int width = 0;
    int num_labels = 0;
    std::vector<double> data;

    ProbMap() = default;
    ProbMap(int h, int w, int labels)
        : height(h), width(w), num_labels(labels),
          data(static_cast<size_t>(h) * w * labels, 0.0) {}

    int pixels() const { return height * width; }
    double& at(int pixel, int label) {
        return data[static_cast<size_t>(pixel) * num_labels + label];
    }
    double at(int pixel, int label) const {
        return data[static_cast<size_t>(pixel) * num_labels + label];
    }
};

// Per-pixel hard labels in {0..L}. Used both for ground truth and for
// E-step estimates.
struct LabelMap {
    int height = 0;
    int width = 0;
    std::vector<int> labels;

    LabelMap() = default;
    LabelMap(int h, int w, int fill = 0)
        : height(h), width(w), labels(static_cast<size_t>(h) * w, fill) {}

    int pixels() const { return height * width; }
    int& at(int x, int y) { return labels[static_cast<size_t>(y) * width + x]; }
    int at(int x, int y) const { return labels[static_cast<size_t>(y) * width + x]; }

    bool operator==(const LabelMap& other) const = default;
};

// Image-level annotation: which labels are present anywhere in the image.
// Background (bit 0) is always present.
struct WeakLabels {
    std::vector<uint8_t> present;  // size = L+1

    WeakLabels() = default;
    explicit WeakLabels(int num_labels) : present(static_cast<size_t>(num_labels), 0) {
        if (num_labels > 0) present[0] = 1;
    }

    int num_labels() const { return static_cast<int>(present.size()); }
    bool has(int label) const { return present[static_cast<size_t>(label)] != 0; }
    void set(int label) { present[static_cast<size_t>(label)] = 1; }
    void clear(int label) { present[static_cast<size_t>(label)] = 0; }

    int foreground_count() const {
        int n = 0;
        for (size_t l = 1; l < present.size(); ++l) n += present[l] ? 1 : 0;
        return n;
    }

    bool operator==(const WeakLabels& other) const = default;
};

// Inclusive pixel rectangle tagged with a foreground class.
struct Box {
    int cls = 0;  // >= 1, boxes never annotate background
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    long long area() const {
        return static_cast<long long>(x1 - x0 + 1) * (y1 - y0 + 1);
    }
    bool contains(int x, int y) const {
        return x >= x0 && x <= x1 && y >= y0 && y <= y1;
    }

    bool operator==(const Box& other) const = default;
};

struct BoxAnnotation {
    std::vector<Box> boxes;

    bool operator==(const BoxAnnotation& other) const = default;
};

// H x W x C image tensor, channels interleaved per pixel, values in [0,1].
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c),
          data(static_cast<size_t>(h) * w * c, fill) {}

    int pixels() const { return height * width; }
    double& at(int x, int y, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int x, int y, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    const double* pixel(int m) const {
        return data.data() + static_cast<size_t>(m) * channels;
    }

    bool operator==(const Image& other) const = default;
};

enum class AnnotationKind { Strong, ImageLevel, Boxes };

// One training/eval item: image plus exactly one annotation variant.
struct Sample {
    std::string id;
    Image image;
    std::variant<LabelMap, WeakLabels, BoxAnnotation> annotation;

    AnnotationKind kind() const {
        return static_cast<AnnotationKind>(annotation.index());
    }
    const LabelMap& strong() const { return std::get<LabelMap>(annotation); }
    const WeakLabels& weak() const { return std::get<WeakLabels>(annotation); }
    const BoxAnnotation& boxes() const { return std::get<BoxAnnotation>(annotation); }
};

// Validates that every box lies inside an h x w image and has x0<=x1, y0<=y1
// and class >= 1. Throws std::invalid_argument otherwise.
void validate_boxes(const BoxAnnotation& ann, int height, int width);

// Per-pixel softmax, Eq-style P(y_m) ∝ exp(f_m). Stabilized by subtracting
// the per-pixel max before exponentiation. Throws std::invalid_argument if
// any input score is non-finite.
ProbMap pixel_distribution(const ScoreMap& scores);

// Per-pixel argmax with deterministic tie-break: lowest label index wins.
LabelMap argmax_labels(const ScoreMap& scores);
LabelMap argmax_labels(const ProbMap& probs);

}  // namespace wseg
