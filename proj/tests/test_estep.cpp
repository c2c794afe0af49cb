#include "wseg/estep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "wseg/common.hpp"

using namespace wseg;

namespace {

ScoreMap single_pixel(std::vector<double> scores) {
    ScoreMap map(1, 1, static_cast<int>(scores.size()));
    map.data = std::move(scores);
    return map;
}

ScoreMap random_scores(Rng& rng, int h, int w, int labels) {
    ScoreMap map(h, w, labels);
    for (double& v : map.data) v = rng.next_double() * 10.0 - 5.0;
    return map;
}

WeakLabels make_weak(int num_labels, std::vector<int> fg) {
    WeakLabels z(num_labels);
    for (int l : fg) z.set(l);
    return z;
}

int count_label(const LabelMap& map, int label) {
    return static_cast<int>(std::count(map.labels.begin(), map.labels.end(), label));
}

// full-sort reference for quota_threshold
double sort_oracle(std::vector<double> diffs, double rho) {
    std::sort(diffs.begin(), diffs.end());
    size_t k = static_cast<size_t>(std::ceil(rho * static_cast<double>(diffs.size())));
    k = std::clamp<size_t>(k, 1, diffs.size());
    return diffs[k - 1];
}

}  // namespace

TEST_CASE("em_fixed_estep: paper biases boost present labels only") {
    // b_fg = 5, b_bg = 3
    WeakLabels z = make_weak(3, {1});
    LabelMap out = em_fixed_estep(single_pixel({2.0, 1.0, 4.0}), z, 5.0, 3.0);
    CHECK(out.labels[0] == 1);  // boosted [5, 6, 4]
}

TEST_CASE("em_fixed_estep: zero bias reduces to plain argmax") {
    Rng rng(3);
    ScoreMap scores = random_scores(rng, 4, 4, 5);
    WeakLabels z = make_weak(5, {1, 3});
    CHECK(em_fixed_estep(scores, z, 0.0, 0.0) == argmax_labels(scores));
}

TEST_CASE("em_fixed_estep: absent labels are unboosted, not suppressed") {
    WeakLabels z = make_weak(3, {1});
    LabelMap out = em_fixed_estep(single_pixel({0.0, 0.0, 10.0}), z, 5.0, 3.0);
    CHECK(out.labels[0] == 2);
}

TEST_CASE("em_fixed_estep: label count mismatch rejected") {
    WeakLabels z = make_weak(4, {1});
    CHECK_THROWS_AS(em_fixed_estep(single_pixel({0.0, 0.0, 0.0}), z, 5.0, 3.0),
                    std::invalid_argument);
}

TEST_CASE("em_fixed_estep: violated bias ordering warns but works") {
    WeakLabels z = make_weak(2, {1});
    CHECK_NOTHROW(em_fixed_estep(single_pixel({0.0, 1.0}), z, 1.0, 2.0));
}

TEST_CASE("quota_threshold: examples") {
    CHECK(quota_threshold({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, 0.2) == 1.0);
    CHECK(quota_threshold({5, 5, 5, 5}, 0.1) == 5.0);
    CHECK(quota_threshold({5, 5, 5, 5}, 1.0) == 5.0);
    CHECK_THROWS_AS(quota_threshold({}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(quota_threshold({1.0}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(quota_threshold({1.0}, 1.5), std::invalid_argument);
}

TEST_CASE("quota_threshold equals the full-sort oracle") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> diffs(1000);
        for (double& d : diffs) d = rng.next_double() * 100.0;
        double rho = 0.001 + rng.next_double() * 0.999;
        CHECK(quota_threshold(diffs, rho) == sort_oracle(diffs, rho));
    }
}

TEST_CASE("em_adapt_biases: single foreground label reaches its quota") {
    Rng rng(23);
    AdaptParams params{0.2, 0.4, 11};
    for (int trial = 0; trial < 20; ++trial) {
        ScoreMap scores = random_scores(rng, 8, 8, 4);
        WeakLabels z = make_weak(4, {2});
        LabelMap out = em_adapt_estep(scores, z, params);
        int quota = static_cast<int>(std::ceil(params.rho_fg * scores.pixels()));
        CHECK(count_label(out, 2) >= quota);
    }
}

TEST_CASE("em_adapt_biases: background-only input suppresses everything else") {
    Rng rng(5);
    ScoreMap scores = random_scores(rng, 6, 6, 4);
    WeakLabels z = make_weak(4, {});
    BiasVector biases = em_adapt_biases(scores, z, {0.2, 0.4, 0});
    CHECK(std::isfinite(biases.bias[0]));
    for (int l = 1; l < 4; ++l) CHECK(biases.bias[static_cast<size_t>(l)] ==
                                      -std::numeric_limits<double>::infinity());
    LabelMap out = em_adapt_estep(scores, z, {0.2, 0.4, 0});
    CHECK(count_label(out, 0) == scores.pixels());
}

TEST_CASE("em_adapt_biases: deterministic under a fixed seed") {
    Rng rng(31);
    ScoreMap scores = random_scores(rng, 8, 8, 6);
    WeakLabels z = make_weak(6, {1, 2, 4});
    AdaptParams params{0.2, 0.4, 77};
    BiasVector a = em_adapt_biases(scores, z, params);
    BiasVector b = em_adapt_biases(scores, z, params);
    CHECK(a.bias == b.bias);
    CHECK(em_adapt_estep(scores, z, params) == em_adapt_estep(scores, z, params));
}

TEST_CASE("em_adapt_estep: absent labels never appear in the output") {
    Rng rng(41);
    for (int trial = 0; trial < 100; ++trial) {
        ScoreMap scores = random_scores(rng, 6, 6, 5);
        WeakLabels z = make_weak(5, {1 + static_cast<int>(rng.next_below(4)),
                                     1 + static_cast<int>(rng.next_below(4))});
        LabelMap out = em_adapt_estep(scores, z, {0.2, 0.4, rng.next_u64()});
        for (int label : out.labels) CHECK(z.has(label));
    }
}

TEST_CASE("em_adapt_estep: last-visited label meets its quota") {
    Rng rng(53);
    for (int trial = 0; trial < 100; ++trial) {
        ScoreMap scores = random_scores(rng, 8, 8, 6);
        WeakLabels z = make_weak(6, {1, 2, 3, 5});
        AdaptParams params{0.2, 0.4, rng.next_u64()};
        std::vector<int> order = em_adapt_visit_order(z, params.seed);
        int last = order.back();
        double rho = last == 0 ? params.rho_bg : params.rho_fg;
        LabelMap out = em_adapt_estep(scores, z, params);
        CHECK(count_label(out, last) >=
              static_cast<int>(std::ceil(rho * scores.pixels())));
    }
}

TEST_CASE("em_adapt_estep: uniform scores stay deterministic") {
    ScoreMap scores(4, 4, 3, 1.5);
    WeakLabels z = make_weak(3, {1});
    AdaptParams params{0.2, 0.4, 9};
    LabelMap a = em_adapt_estep(scores, z, params);
    LabelMap b = em_adapt_estep(scores, z, params);
    CHECK(a == b);
    for (int label : a.labels) CHECK(z.has(label));
}

TEST_CASE("em_adapt_biases: infeasible single-label quotas rejected") {
    ScoreMap scores(4, 4, 3, 0.0);
    WeakLabels z = make_weak(3, {1});
    CHECK_THROWS_AS(em_adapt_biases(scores, z, {0.7, 0.4, 0}), std::invalid_argument);
    // with two present labels the same rhos are allowed
    WeakLabels z2 = make_weak(3, {1, 2});
    CHECK_NOTHROW(em_adapt_biases(scores, z2, {0.7, 0.2, 0}));
}

TEST_CASE("em_fixed_estep: raising b_fg never shrinks foreground coverage") {
    Rng rng(61);
    for (int trial = 0; trial < 100; ++trial) {
        ScoreMap scores = random_scores(rng, 6, 6, 5);
        WeakLabels z = make_weak(5, {1, 3});
        double b_bg = 1.0 + rng.next_double() * 3.0;
        double lo = b_bg + rng.next_double() * 3.0;
        double hi = lo + rng.next_double() * 3.0;
        auto fg_count = [&](double b_fg) {
            LabelMap out = em_fixed_estep(scores, z, b_fg, b_bg);
            int n = 0;
            for (int label : out.labels) n += (label >= 1 && z.has(label)) ? 1 : 0;
            return n;
        };
        CHECK(fg_count(hi) >= fg_count(lo));
    }
}

TEST_CASE("bbox_em_fixed_estep: boost is box-gated, wins are not") {
    // pixel outside all boxes: foreground can still win on raw score
    ScoreMap scores(1, 2, 2);
    scores.at(0, 0) = 1.0;  // pixel 0 outside the box
    scores.at(0, 1) = 9.0;
    scores.at(1, 0) = 2.0;  // pixel 1 inside a class-1 box
    scores.at(1, 1) = 0.0;
    BoxAnnotation ann;
    ann.boxes.push_back({1, 1, 0, 1, 0});
    LabelMap out = bbox_em_fixed_estep(scores, ann, 5.0, 3.0);
    CHECK(out.labels[0] == 1);  // [4, 9]
    CHECK(out.labels[1] == 0);  // [5, 5] -> tie-break to background
}

TEST_CASE("bbox_em_fixed_estep: matches a brute-force reimplementation") {
    Rng rng(71);
    ScoreMap scores = random_scores(rng, 6, 6, 4);
    BoxAnnotation ann;
    ann.boxes.push_back({1, 0, 0, 3, 3});
    ann.boxes.push_back({2, 2, 2, 5, 4});
    LabelMap got = bbox_em_fixed_estep(scores, ann, 5.0, 3.0);
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 6; ++x) {
            int m = y * 6 + x;
            int best = 0;
            double best_score = -1e300;
            for (int l = 0; l < 4; ++l) {
                double boost = 0.0;
                if (l == 0) {
                    boost = 3.0;
                } else {
                    for (const Box& b : ann.boxes) {
                        if (b.cls == l && b.contains(x, y)) {
                            boost = 5.0;
                            break;
                        }
                    }
                }
                double s = scores.at(m, l) + boost;
                if (s > best_score) {
                    best_score = s;
                    best = l;
                }
            }
            CHECK(got.labels[static_cast<size_t>(m)] == best);
        }
    }
}

TEST_CASE("bbox_em_fixed_estep: out-of-bounds boxes rejected") {
    ScoreMap scores(4, 4, 3, 0.0);
    BoxAnnotation ann;
    ann.boxes.push_back({1, 0, 0, 4, 2});
    CHECK_THROWS_AS(bbox_em_fixed_estep(scores, ann, 5.0, 3.0), std::invalid_argument);
}
