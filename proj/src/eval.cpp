#include "wseg/eval.hpp"

#include <stdexcept>

namespace wseg {

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.num_labels != num_labels) {
        throw std::invalid_argument("ConfusionMatrix::merge: label count mismatch");
    }
    for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

void accumulate(ConfusionMatrix& cm, const LabelMap& gt, const LabelMap& pred,
                std::optional<int> void_label) {
    if (gt.height != pred.height || gt.width != pred.width) {
        throw std::invalid_argument("accumulate: gt and pred dimensions differ");
    }
    for (int m = 0; m < gt.pixels(); ++m) {
        int g = gt.labels[static_cast<size_t>(m)];
        if (void_label && g == *void_label) continue;
        int p = pred.labels[static_cast<size_t>(m)];
        if (g < 0 || g >= cm.num_labels || p < 0 || p >= cm.num_labels) {
            throw std::invalid_argument("accumulate: label outside matrix range");
        }
        cm.at(g, p) += 1;
    }
}

IouReport mean_iou(const ConfusionMatrix& cm) {
    const int labels = cm.num_labels;
    IouReport report;
    report.per_class.assign(static_cast<size_t>(labels), 0.0);
    report.defined.assign(static_cast<size_t>(labels), false);

    double sum = 0.0;
    int defined_count = 0;
    for (int l = 0; l < labels; ++l) {
        uint64_t row = 0, col = 0;
        for (int k = 0; k < labels; ++k) {
            row += cm.at(l, k);
            col += cm.at(k, l);
        }
        uint64_t inter = cm.at(l, l);
        uint64_t uni = row + col - inter;
        if (uni == 0) continue;  // class in neither gt nor pred: excluded from the mean
        double iou = static_cast<double>(inter) / static_cast<double>(uni);
        report.per_class[static_cast<size_t>(l)] = iou;
        report.defined[static_cast<size_t>(l)] = true;
        sum += iou;
        ++defined_count;
    }
    if (defined_count == 0) {
        throw std::invalid_argument("mean_iou: no class is defined (empty matrix)");
    }
    report.mean = sum / defined_count;
    return report;
}

}  // namespace wseg
