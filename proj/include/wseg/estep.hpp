#pragma once

#include <cstdint>
#include <vector>

#include "wseg/core.hpp"

namespace wseg {

// Per-label additive bias b_l. -inf is a valid entry and suppresses the
// label outright.
struct BiasVector {
    std::vector<double> bias;  // length L+1

    int num_labels() const { return static_cast<int>(bias.size()); }
};

// Parameters of the adaptive E-step: minimum area fractions for background
// and for each present foreground class, plus the seed that draws the
// foreground visit order.
struct AdaptParams {
    double rho_fg = 0.2;
    double rho_bg = 0.4;
    uint64_t seed = 0;
};

// Fixed-bias E-step: boost every present label's score by a constant
// (b_bg for background, b_fg for foreground) and take the per-pixel argmax.
// Absent labels are left unboosted, not suppressed. Warns on stderr if the
// intended ordering b_fg > b_bg > 0 is violated.
LabelMap em_fixed_estep(const ScoreMap& scores, const WeakLabels& z, double b_fg, double b_bg);

// k-th smallest of diffs with k = ceil(rho * n), i.e. the smallest bias b
// such that at least ceil(rho * n) entries satisfy d <= b. O(n) expected
// via selection, never a full sort. Throws on empty input or rho outside
// (0, 1].
double quota_threshold(std::vector<double> diffs, double rho);

// The sequence of labels the adaptive E-step visits: background first, then
// the present foreground labels in an order drawn from seed.
std::vector<int> em_adapt_visit_order(const WeakLabels& z, uint64_t seed);

// Adaptive biases: b_l = -inf for absent labels; visited labels (background
// first, then present foreground labels in seeded random order) get the
// percentile bias that hands them at least ceil(rho_l * M) pixels at visit
// time. Biases assigned to earlier labels feed into later labels' score
// maxima; unvisited present labels count at bias 0.
BiasVector em_adapt_biases(const ScoreMap& scores, const WeakLabels& z, const AdaptParams& params);

// argmax of scores + em_adapt_biases(...), with exact ties resolved toward
// the later-visited label (the percentile construction ties the defining
// pixel with its best competitor; later-visited-wins keeps the quota exact).
// Pixels can only take present labels; the last-visited label always reaches
// its area quota.
LabelMap em_adapt_estep(const ScoreMap& scores, const WeakLabels& z, const AdaptParams& params);

// Box-gated fixed-bias E-step: background is boosted by b_bg everywhere,
// class l by b_fg only at pixels covered by one of its boxes.
LabelMap bbox_em_fixed_estep(const ScoreMap& scores, const BoxAnnotation& boxes,
                             double b_fg, double b_bg);

// scores + bias per label; -inf biases yield -inf scores. Shared by the
// adaptive E-step and the estep-debug dump.
ScoreMap add_bias(const ScoreMap& scores, const BiasVector& biases);

}  // namespace wseg
