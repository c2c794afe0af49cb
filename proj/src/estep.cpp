#include "wseg/estep.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace wseg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void warn_bias_ordering(const char* who, double b_fg, double b_bg) {
    if (!(b_fg > b_bg && b_bg > 0.0)) {
        std::cerr << "warning: " << who << ": expected b_fg > b_bg > 0, got b_fg=" << b_fg
                  << " b_bg=" << b_bg << "\n";
    }
}

void check_label_count(const ScoreMap& scores, const WeakLabels& z, const char* who) {
    if (z.num_labels() != scores.num_labels) {
        throw std::invalid_argument(std::string(who) + ": label count mismatch (scores " +
                                    std::to_string(scores.num_labels) + ", weak labels " +
                                    std::to_string(z.num_labels()) + ")");
    }
    if (z.num_labels() == 0 || !z.has(0)) {
        throw std::invalid_argument(std::string(who) + ": background label must be present");
    }
}

}  // namespace

LabelMap em_fixed_estep(const ScoreMap& scores, const WeakLabels& z, double b_fg, double b_bg) {
    check_label_count(scores, z, "em_fixed_estep");
    warn_bias_ordering("em_fixed_estep", b_fg, b_bg);

    const int labels = scores.num_labels;
    const int pixels = scores.pixels();
    LabelMap out(scores.height, scores.width);
    for (int m = 0; m < pixels; ++m) {
        const double* row = scores.pixel_scores(m);
        int best = 0;
        double best_score = row[0] + b_bg;  // background is always present
        for (int l = 1; l < labels; ++l) {
            double s = row[l] + (z.has(l) ? b_fg : 0.0);
            if (s > best_score) {
                best_score = s;
                best = l;
            }
        }
        out.labels[static_cast<size_t>(m)] = best;
    }
    return out;
}

double quota_threshold(std::vector<double> diffs, double rho) {
    if (diffs.empty()) {
        throw std::invalid_argument("quota_threshold: empty input");
    }
    if (!(rho > 0.0) || rho > 1.0) {
        throw std::invalid_argument("quota_threshold: rho must be in (0, 1]");
    }
    size_t n = diffs.size();
    size_t k = static_cast<size_t>(std::ceil(rho * static_cast<double>(n)));
    k = std::clamp<size_t>(k, 1, n);
    auto kth = diffs.begin() + static_cast<ptrdiff_t>(k - 1);
    std::nth_element(diffs.begin(), kth, diffs.end());
    return *kth;
}

std::vector<int> em_adapt_visit_order(const WeakLabels& z, uint64_t seed) {
    std::vector<int> order;
    order.push_back(0);
    std::vector<int> fg;
    for (int l = 1; l < z.num_labels(); ++l) {
        if (z.has(l)) fg.push_back(l);
    }
    Rng rng(seed);
    rng.shuffle(fg);
    order.insert(order.end(), fg.begin(), fg.end());
    return order;
}

BiasVector em_adapt_biases(const ScoreMap& scores, const WeakLabels& z, const AdaptParams& params) {
    check_label_count(scores, z, "em_adapt_biases");
    if (!(params.rho_fg > 0.0 && params.rho_fg < 1.0) ||
        !(params.rho_bg > 0.0 && params.rho_bg < 1.0)) {
        throw std::invalid_argument("em_adapt_biases: rho_fg and rho_bg must be in (0, 1)");
    }
    if (z.foreground_count() == 1 && params.rho_fg + params.rho_bg > 1.0) {
        throw std::invalid_argument(
            "em_adapt_biases: rho_fg + rho_bg > 1 is infeasible with a single foreground label");
    }

    const int labels = scores.num_labels;
    const int pixels = scores.pixels();

    BiasVector result;
    result.bias.assign(static_cast<size_t>(labels), 0.0);
    for (int l = 0; l < labels; ++l) {
        if (!z.has(l)) result.bias[static_cast<size_t>(l)] = kNegInf;
    }

    std::vector<int> order = em_adapt_visit_order(z, params.seed);

    std::vector<double> diffs(static_cast<size_t>(pixels));
    for (int l : order) {
        double rho = (l == 0) ? params.rho_bg : params.rho_fg;
        for (int m = 0; m < pixels; ++m) {
            const double* row = scores.pixel_scores(m);
            double fmax = kNegInf;
            for (int lp = 0; lp < labels; ++lp) {
                double s = row[lp] + result.bias[static_cast<size_t>(lp)];
                if (s > fmax) fmax = s;
            }
            diffs[static_cast<size_t>(m)] = fmax - row[l];  // >= 0: l itself is at bias 0
        }
        result.bias[static_cast<size_t>(l)] = quota_threshold(diffs, rho);
    }
    return result;
}

LabelMap em_adapt_estep(const ScoreMap& scores, const WeakLabels& z, const AdaptParams& params) {
    BiasVector biases = em_adapt_biases(scores, z, params);
    ScoreMap boosted = add_bias(scores, biases);

    // The pixel that defines a label's percentile bias ties its strongest
    // competitor exactly (boosted score == max). Breaking such ties toward
    // the later-visited label is what makes the visit-time area quota exact;
    // the lowest-index rule would hand that pixel to the competitor.
    std::vector<int> order = em_adapt_visit_order(z, params.seed);
    std::vector<int> rank(static_cast<size_t>(scores.num_labels), -1);
    for (size_t i = 0; i < order.size(); ++i) rank[static_cast<size_t>(order[i])] = static_cast<int>(i);

    const int labels = scores.num_labels;
    LabelMap out(scores.height, scores.width);
    for (int m = 0; m < scores.pixels(); ++m) {
        int best = 0;
        double best_score = boosted.at(m, 0);
        for (int l = 1; l < labels; ++l) {
            double s = boosted.at(m, l);
            if (s > best_score ||
                (s == best_score && rank[static_cast<size_t>(l)] > rank[static_cast<size_t>(best)])) {
                best_score = s;
                best = l;
            }
        }
        out.labels[static_cast<size_t>(m)] = best;
    }
    return out;
}

LabelMap bbox_em_fixed_estep(const ScoreMap& scores, const BoxAnnotation& boxes,
                             double b_fg, double b_bg) {
    validate_boxes(boxes, scores.height, scores.width);
    for (const Box& b : boxes.boxes) {
        if (b.cls >= scores.num_labels) {
            throw std::invalid_argument("bbox_em_fixed_estep: box class " + std::to_string(b.cls) +
                                        " out of range for " + std::to_string(scores.num_labels) +
                                        " labels");
        }
    }
    warn_bias_ordering("bbox_em_fixed_estep", b_fg, b_bg);

    const int labels = scores.num_labels;
    const int pixels = scores.pixels();

    // covered[m * labels + l]: pixel m lies inside some box of class l.
    std::vector<uint8_t> covered(static_cast<size_t>(pixels) * labels, 0);
    for (const Box& b : boxes.boxes) {
        for (int y = b.y0; y <= b.y1; ++y) {
            for (int x = b.x0; x <= b.x1; ++x) {
                size_t m = static_cast<size_t>(y) * scores.width + x;
                covered[m * labels + b.cls] = 1;
            }
        }
    }

    LabelMap out(scores.height, scores.width);
    for (int m = 0; m < pixels; ++m) {
        const double* row = scores.pixel_scores(m);
        const uint8_t* cov = covered.data() + static_cast<size_t>(m) * labels;
        int best = 0;
        double best_score = row[0] + b_bg;
        for (int l = 1; l < labels; ++l) {
            double s = row[l] + (cov[l] ? b_fg : 0.0);
            if (s > best_score) {
                best_score = s;
                best = l;
            }
        }
        out.labels[static_cast<size_t>(m)] = best;
    }
    return out;
}

ScoreMap add_bias(const ScoreMap& scores, const BiasVector& biases) {
    if (biases.num_labels() != scores.num_labels) {
        throw std::invalid_argument("add_bias: label count mismatch");
    }
    ScoreMap out = scores;
    const int labels = scores.num_labels;
    const int pixels = scores.pixels();
    for (int m = 0; m < pixels; ++m) {
        for (int l = 0; l < labels; ++l) {
            out.at(m, l) += biases.bias[static_cast<size_t>(l)];
        }
    }
    return out;
}

}  // namespace wseg
