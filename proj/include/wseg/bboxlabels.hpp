#pragma once

#include "wseg/core.hpp"
#include "wseg/densecrf.hpp"

namespace wseg {

// Unary magnitude used for hard CRF constraints. Post-softmax this is
// indistinguishable from a delta, so the same mean-field path serves both
// constrained and free pixels; constrained pixels are re-clamped afterwards
// to make the guarantee exact.
constexpr double kHardUnary = 100.0;

struct BboxSegConfig {
    double alpha = 0.2;         // fraction of box area constrained to foreground
    CrfParams crf;
    double neutral_unary = 0.0; // unary for candidate labels of in-between pixels
};

// Fill every box with its class; pixels under multiple boxes take the
// smallest-area box (earliest in the list on equal area); uncovered pixels
// are background.
LabelMap bbox_rect(const BoxAnnotation& boxes, int height, int width);

// Concentric sub-rectangle holding at least alpha of the box area: each side
// is scaled by sqrt(alpha) and rounded up, clamped to [1, side].
Box center_region(const Box& box, double alpha);

// Foreground/background segmentation from boxes: hard background outside all
// boxes, hard foreground in each box's center region, CRF inference for the
// in-between band. Hard-constrained pixels keep their label in the output.
LabelMap bbox_seg(const Image& image, const BoxAnnotation& boxes, const BboxSegConfig& cfg);

}  // namespace wseg
