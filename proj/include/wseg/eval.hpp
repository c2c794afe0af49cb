#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "wseg/core.hpp"

namespace wseg {

// (L+1) x (L+1) pixel counts, rows = ground truth, cols = prediction.
// Supports cell-wise merge so per-image matrices can be reduced in parallel.
struct ConfusionMatrix {
    int num_labels = 0;
    std::vector<uint64_t> counts;

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int labels)
        : num_labels(labels), counts(static_cast<size_t>(labels) * labels, 0) {}

    uint64_t& at(int gt, int pred) {
        return counts[static_cast<size_t>(gt) * num_labels + pred];
    }
    uint64_t at(int gt, int pred) const {
        return counts[static_cast<size_t>(gt) * num_labels + pred];
    }
    uint64_t total() const {
        uint64_t t = 0;
        for (uint64_t c : counts) t += c;
        return t;
    }
    void merge(const ConfusionMatrix& other);
};

// Adds one image pair into the matrix; pixels equal to void_label (in the
// ground truth) are skipped entirely.
void accumulate(ConfusionMatrix& cm, const LabelMap& gt, const LabelMap& pred,
                std::optional<int> void_label = std::nullopt);

struct IouReport {
    std::vector<double> per_class;   // meaningful only where defined[l]
    std::vector<bool> defined;       // false when the class appears in neither gt nor pred
    double mean = 0.0;
};

// Per-class intersection-over-union and the mean over defined classes
// (VOC-style, computed from the dataset-level matrix). Throws if every
// class is undefined.
IouReport mean_iou(const ConfusionMatrix& cm);

}  // namespace wseg
