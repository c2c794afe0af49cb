#include "wseg/densecrf.hpp"

#include <cmath>

#include "doctest.h"
#include "wseg/common.hpp"

using namespace wseg;

namespace {

Image random_image(Rng& rng, int h, int w) {
    Image image(h, w, 3);
    for (double& v : image.data) v = rng.next_double();
    return image;
}

ScoreMap random_unary(Rng& rng, int h, int w, int labels) {
    ScoreMap map(h, w, labels);
    for (double& v : map.data) v = rng.next_double() * 6.0 - 3.0;
    return map;
}

}  // namespace

TEST_CASE("mean_field: zero pairwise weights reproduce the unary softmax") {
    Rng rng(5);
    ScoreMap unary = random_unary(rng, 5, 4, 3);
    Image image = random_image(rng, 5, 4);
    CrfParams params;
    params.w_spatial = 0.0;
    params.w_bilateral = 0.0;
    params.iterations = 7;
    ProbMap q = mean_field(unary, image, params);
    ProbMap expected = pixel_distribution(unary);
    CHECK(q.data == expected.data);  // identical arithmetic path
    CHECK(crf_refine(unary, image, params) == argmax_labels(unary));
}

TEST_CASE("mean_field: zero iterations return the initialization") {
    Rng rng(6);
    ScoreMap unary = random_unary(rng, 4, 4, 4);
    Image image = random_image(rng, 4, 4);
    CrfParams params;
    params.iterations = 0;
    ProbMap q = mean_field(unary, image, params);
    CHECK(q.data == pixel_distribution(unary).data);
}

TEST_CASE("mean_field: strong spatial coupling flips an isolated pixel") {
    // 3x3 constant-color image; unary favors label 1 everywhere except the
    // center, which starts at label 2
    Image image(3, 3, 3, 0.5);
    ScoreMap unary(3, 3, 3, 0.0);
    for (int m = 0; m < 9; ++m) {
        if (m == 4) {
            unary.at(m, 2) = 1.0;
        } else {
            unary.at(m, 1) = 1.0;
        }
    }
    CrfParams params;
    params.w_spatial = 3.0;
    params.theta_gamma = 3.0;
    params.w_bilateral = 0.0;
    params.iterations = 10;
    CHECK(argmax_labels(unary).labels[4] == 2);
    LabelMap refined = crf_refine(unary, image, params);
    CHECK(refined.labels[4] == 1);
    for (int m = 0; m < 9; ++m) CHECK(refined.labels[static_cast<size_t>(m)] == 1);
}

TEST_CASE("mean_field: every iteration stays normalized") {
    Rng rng(7);
    ScoreMap unary = random_unary(rng, 6, 5, 4);
    Image image = random_image(rng, 6, 5);
    CrfParams params;
    params.iterations = 10;
    int seen = 0;
    mean_field(unary, image, params, [&](int iteration, const ProbMap& q) {
        ++seen;
        CHECK(iteration == seen);
        for (int m = 0; m < q.pixels(); ++m) {
            double sum = 0.0;
            for (int l = 0; l < q.num_labels; ++l) sum += q.at(m, l);
            CHECK(std::fabs(sum - 1.0) <= 1e-9);
        }
    });
    CHECK(seen == 10);
}

TEST_CASE("mean_field: label permutation equivariance") {
    Rng rng(8);
    ScoreMap unary = random_unary(rng, 4, 4, 3);
    Image image = random_image(rng, 4, 4);
    CrfParams params;
    params.iterations = 5;

    // permute labels (0,1,2) -> (2,0,1)
    const int perm[3] = {2, 0, 1};
    ScoreMap permuted(4, 4, 3);
    for (int m = 0; m < unary.pixels(); ++m) {
        for (int l = 0; l < 3; ++l) permuted.at(m, perm[l]) = unary.at(m, l);
    }
    ProbMap q = mean_field(unary, image, params);
    ProbMap qp = mean_field(permuted, image, params);
    for (int m = 0; m < q.pixels(); ++m) {
        for (int l = 0; l < 3; ++l) {
            CHECK(qp.at(m, perm[l]) == doctest::Approx(q.at(m, l)).epsilon(1e-12));
        }
    }
}

TEST_CASE("mean_field: dimension mismatch rejected") {
    ScoreMap unary(4, 4, 2, 0.0);
    Image image(4, 5, 3, 0.0);
    CHECK_THROWS_AS(mean_field(unary, image, CrfParams{}), std::invalid_argument);
    Image ok(4, 4, 3, 0.0);
    CrfParams bad;
    bad.theta_gamma = 0.0;
    CHECK_THROWS_AS(mean_field(unary, ok, bad), std::invalid_argument);
}
