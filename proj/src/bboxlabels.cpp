#include "wseg/bboxlabels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace wseg {

LabelMap bbox_rect(const BoxAnnotation& boxes, int height, int width) {
    validate_boxes(boxes, height, width);
    LabelMap out(height, width, 0);
    std::vector<long long> best_area(static_cast<size_t>(height) * width,
                                     std::numeric_limits<long long>::max());
    // Visiting boxes in list order with a strict comparison keeps the
    // earliest box on equal areas.
    for (const Box& b : boxes.boxes) {
        long long area = b.area();
        for (int y = b.y0; y <= b.y1; ++y) {
            for (int x = b.x0; x <= b.x1; ++x) {
                size_t m = static_cast<size_t>(y) * width + x;
                if (area < best_area[m]) {
                    best_area[m] = area;
                    out.labels[m] = b.cls;
                }
            }
        }
    }
    return out;
}

Box center_region(const Box& box, double alpha) {
    if (!(alpha > 0.0) || alpha > 1.0) {
        throw std::invalid_argument("center_region: alpha must be in (0, 1]");
    }
    int w = box.x1 - box.x0 + 1;
    int h = box.y1 - box.y0 + 1;
    double scale = std::sqrt(alpha);
    int cw = std::clamp(static_cast<int>(std::ceil(w * scale)), 1, w);
    int ch = std::clamp(static_cast<int>(std::ceil(h * scale)), 1, h);
    Box out;
    out.cls = box.cls;
    out.x0 = box.x0 + (w - cw) / 2;
    out.y0 = box.y0 + (h - ch) / 2;
    out.x1 = out.x0 + cw - 1;
    out.y1 = out.y0 + ch - 1;
    return out;
}

LabelMap bbox_seg(const Image& image, const BoxAnnotation& boxes, const BboxSegConfig& cfg) {
    const int height = image.height;
    const int width = image.width;
    validate_boxes(boxes, height, width);
    if (boxes.boxes.empty()) {
        return LabelMap(height, width, 0);
    }

    int num_labels = 1;
    for (const Box& b : boxes.boxes) num_labels = std::max(num_labels, b.cls + 1);

    const int pixels = height * width;
    const size_t np = static_cast<size_t>(pixels);

    // center_label[m]: hard foreground constraint (smallest-area box whose
    // center region covers m, earliest on ties), or -1.
    std::vector<int> center_label(np, -1);
    std::vector<long long> center_area(np, std::numeric_limits<long long>::max());
    std::vector<uint8_t> in_any_box(np, 0);
    std::vector<uint8_t> candidate(np * static_cast<size_t>(num_labels), 0);

    for (const Box& b : boxes.boxes) {
        for (int y = b.y0; y <= b.y1; ++y) {
            for (int x = b.x0; x <= b.x1; ++x) {
                size_t m = static_cast<size_t>(y) * width + x;
                in_any_box[m] = 1;
                candidate[m * num_labels + b.cls] = 1;
            }
        }
        Box center = center_region(b, cfg.alpha);
        long long area = b.area();
        for (int y = center.y0; y <= center.y1; ++y) {
            for (int x = center.x0; x <= center.x1; ++x) {
                size_t m = static_cast<size_t>(y) * width + x;
                if (area < center_area[m]) {
                    center_area[m] = area;
                    center_label[m] = b.cls;
                }
            }
        }
    }

    ScoreMap unary(height, width, num_labels, -kHardUnary);
    for (int m = 0; m < pixels; ++m) {
        size_t mm = static_cast<size_t>(m);
        if (!in_any_box[mm]) {
            unary.at(m, 0) = kHardUnary;
        } else if (center_label[mm] >= 0) {
            unary.at(m, center_label[mm]) = kHardUnary;
        } else {
            // in-between band: background and covering classes compete
            unary.at(m, 0) = cfg.neutral_unary;
            for (int l = 1; l < num_labels; ++l) {
                if (candidate[mm * num_labels + l]) unary.at(m, l) = cfg.neutral_unary;
            }
        }
    }

    LabelMap out = argmax_labels(mean_field(unary, image, cfg.crf));

    // Re-clamp so the hard constraints hold exactly in the output.
    for (int m = 0; m < pixels; ++m) {
        size_t mm = static_cast<size_t>(m);
        if (!in_any_box[mm]) {
            out.labels[mm] = 0;
        } else if (center_label[mm] >= 0) {
            out.labels[mm] = center_label[mm];
        }
    }
    return out;
}

}  // namespace wseg
