#include "wseg/train.hpp"

#include <fstream>
#include <map>

#include "doctest.h"
#include "wseg/common.hpp"
#include "wseg/data.hpp"

using namespace wseg;

namespace {

// tiny dataset: strong masks at 16x16 with 2 foreground classes
std::vector<GeneratedSample> toy_generated(uint64_t seed, int n) {
    GenConfig cfg;
    cfg.num_images = n;
    cfg.height = 16;
    cfg.width = 16;
    cfg.num_fg_classes = 2;
    cfg.shapes_min = 1;
    cfg.shapes_max = 2;
    cfg.seed = seed;
    return generate(cfg);
}

std::vector<Sample> strong_dataset(uint64_t seed, int n) {
    std::vector<Sample> out;
    for (auto& gs : toy_generated(seed, n)) out.push_back(std::move(gs.sample));
    return out;
}

std::vector<Sample> weak_dataset(uint64_t seed, int n) {
    std::vector<Sample> out;
    for (auto& gs : toy_generated(seed, n)) {
        Sample s = std::move(gs.sample);
        WeakLabels z = weak_labels_from_mask(s.strong(), 3);
        if (z.foreground_count() == 0) continue;
        s.annotation = std::move(z);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Sample> boxes_dataset(uint64_t seed, int n) {
    std::vector<Sample> out;
    for (auto& gs : toy_generated(seed, n)) {
        Sample s = std::move(gs.sample);
        s.annotation = boxes_from_instances(gs.instances);
        out.push_back(std::move(s));
    }
    return out;
}

TrainConfig toy_config() {
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.strong_per_batch = 2;
    cfg.steps = 10;
    cfg.net.in_channels = 3;
    cfg.net.hidden_channels = {6};
    cfg.net.kernel_sizes = {3};
    cfg.net.num_labels = 3;
    cfg.net.seed = 5;
    cfg.sgd.lr = 0.001;
    cfg.seed = 1;
    return cfg;
}

}  // namespace

TEST_CASE("estep_dispatch: strong samples pass their mask through verbatim") {
    auto dataset = strong_dataset(3, 1);
    TrainConfig cfg = toy_config();
    EstepResult r = estep_dispatch(ScoreMap(), dataset[0], cfg, {}, 0);
    CHECK(r.target == dataset[0].strong());
    CHECK(r.ignore.empty());
}

TEST_CASE("estep_dispatch: image-level EM-Fixed delegates exactly") {
    auto dataset = weak_dataset(5, 1);
    REQUIRE(!dataset.empty());
    TrainConfig cfg = toy_config();
    cfg.weak_mode = WeakMode::EmFixed;
    NetParams net = init_net(cfg.net);
    ScoreMap scores = forward(net, dataset[0].image);
    EstepResult r = estep_dispatch(scores, dataset[0], cfg, {}, 42);
    CHECK(r.target == em_fixed_estep(scores, dataset[0].weak(), cfg.b_fg, cfg.b_bg));
}

TEST_CASE("estep_dispatch: offline box targets are cached and stable") {
    auto dataset = boxes_dataset(7, 2);
    TrainConfig cfg = toy_config();
    cfg.box_mode = BoxMode::BboxRect;
    OfflineTargets offline = precompute_box_targets(dataset, cfg);
    REQUIRE(offline.size() == dataset.size());
    for (const Sample& s : dataset) {
        LabelMap fresh = bbox_rect(s.boxes(), s.image.height, s.image.width);
        // same dispatch result no matter how often or when it is asked
        for (int visit = 0; visit < 3; ++visit) {
            EstepResult r = estep_dispatch(ScoreMap(), s, cfg, offline,
                                           static_cast<uint64_t>(visit));
            CHECK(r.target == fresh);
        }
    }
    // missing cache entry is a config error
    CHECK_THROWS_AS(estep_dispatch(ScoreMap(), dataset[0], cfg, {}, 0), ConfigError);
}

TEST_CASE("run_training: supervised loss decreases monotonically at lr 1e-3") {
    auto dataset = strong_dataset(11, 2);
    TrainConfig cfg = toy_config();
    cfg.batch_size = 2;
    cfg.strong_per_batch = 2;
    cfg.steps = 50;
    cfg.sgd.lr = 0.001;
    TrainResult result = run_training(dataset, cfg);
    REQUIRE(result.log.size() == 50);
    for (size_t i = 1; i < result.log.size(); ++i) {
        CHECK(result.log[i].loss < result.log[i - 1].loss);
    }
}

TEST_CASE("run_training: batches bundle the configured strong/weak proportion") {
    auto dataset = strong_dataset(13, 3);
    for (Sample& s : weak_dataset(17, 6)) dataset.push_back(std::move(s));
    TrainConfig cfg = toy_config();
    cfg.batch_size = 4;
    cfg.strong_per_batch = 1;
    cfg.steps = 8;
    int checked = 0;
    run_training(dataset, cfg, {}, [&](const StepInfo& info) {
        REQUIRE(info.batch.size() == 4);
        int strong = 0;
        for (const Sample* s : info.batch) strong += s->kind() == AnnotationKind::Strong;
        CHECK(strong == 1);
        CHECK(info.batch[0]->kind() == AnnotationKind::Strong);
        ++checked;
    });
    CHECK(checked == 8);
}

TEST_CASE("run_training: same config and seed reproduce bit-identical results") {
    auto dataset = strong_dataset(19, 2);
    for (Sample& s : weak_dataset(23, 4)) dataset.push_back(std::move(s));
    TrainConfig cfg = toy_config();
    cfg.batch_size = 3;
    cfg.strong_per_batch = 1;
    cfg.steps = 12;
    cfg.weak_mode = WeakMode::EmAdapt;
    TrainResult a = run_training(dataset, cfg);
    TrainResult b = run_training(dataset, cfg);
    CHECK(a.params.theta == b.params.theta);
    REQUIRE(a.log.size() == b.log.size());
    for (size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].loss == b.log[i].loss);
        CHECK(a.log[i].lr == b.log[i].lr);
    }
}

TEST_CASE("run_training: thread count does not change the result") {
    auto dataset = strong_dataset(29, 2);
    for (Sample& s : weak_dataset(31, 4)) dataset.push_back(std::move(s));
    TrainConfig cfg = toy_config();
    cfg.batch_size = 4;
    cfg.strong_per_batch = 1;
    cfg.steps = 8;
    cfg.weak_mode = WeakMode::EmAdapt;
    cfg.threads = 1;
    TrainResult serial = run_training(dataset, cfg);
    cfg.threads = 4;
    TrainResult parallel = run_training(dataset, cfg);
    CHECK(serial.params.theta == parallel.params.theta);
}

TEST_CASE("run_training: EM-Adapt targets never use absent labels") {
    auto dataset = weak_dataset(37, 5);
    TrainConfig cfg = toy_config();
    cfg.batch_size = 2;
    cfg.strong_per_batch = 0;
    cfg.steps = 6;
    cfg.weak_mode = WeakMode::EmAdapt;
    run_training(dataset, cfg, {}, [&](const StepInfo& info) {
        for (size_t s = 0; s < info.batch.size(); ++s) {
            const WeakLabels& z = info.batch[s]->weak();
            for (int label : (*info.targets)[s].labels) CHECK(z.has(label));
        }
    });
}

TEST_CASE("run_training: online Bbox-EM-Fixed targets move during training") {
    auto dataset = boxes_dataset(41, 3);
    TrainConfig cfg = toy_config();
    cfg.batch_size = 2;
    cfg.strong_per_batch = 0;
    cfg.steps = 30;
    cfg.box_mode = BoxMode::BboxEmFixed;
    cfg.sgd.lr = 0.05;  // move the net far enough for targets to change

    std::map<std::string, LabelMap> first_target;
    bool changed = false;
    run_training(dataset, cfg, {}, [&](const StepInfo& info) {
        for (size_t s = 0; s < info.batch.size(); ++s) {
            const std::string& id = info.batch[s]->id;
            auto [it, inserted] = first_target.emplace(id, (*info.targets)[s]);
            if (!inserted && !(it->second == (*info.targets)[s])) changed = true;
        }
    });
    CHECK(changed);
}

TEST_CASE("run_training: pool misconfiguration is a config error") {
    auto strong = strong_dataset(43, 2);
    auto weak = weak_dataset(47, 2);
    TrainConfig cfg = toy_config();

    cfg.batch_size = 2;
    cfg.strong_per_batch = 1;  // needs weak samples too
    CHECK_THROWS_AS(run_training(strong, cfg), ConfigError);

    cfg.strong_per_batch = 2;
    CHECK_THROWS_AS(run_training(weak, cfg), ConfigError);

    cfg.strong_per_batch = 3;
    CHECK_THROWS_AS(run_training(strong, cfg), ConfigError);

    CHECK_THROWS_AS(run_training({}, cfg), ConfigError);
}

TEST_CASE("run_training: validation mIOU lands in the metrics log") {
    auto dataset = strong_dataset(53, 3);
    auto val = strong_dataset(59, 2);
    TrainConfig cfg = toy_config();
    cfg.steps = 9;
    cfg.eval_every = 4;
    TrainResult result = run_training(dataset, cfg, val);
    REQUIRE(result.log.size() == 9);
    for (const MetricsRow& row : result.log) {
        bool expect = row.step % 4 == 0 || row.step == 9;
        CHECK(row.has_miou == expect);
        if (row.has_miou) {
            CHECK(row.miou >= 0.0);
            CHECK(row.miou <= 1.0);
        }
    }
}

TEST_CASE("run_training: lr decay schedule applies stepwise") {
    auto dataset = strong_dataset(61, 2);
    TrainConfig cfg = toy_config();
    cfg.steps = 9;
    cfg.sgd.lr = 0.01;
    cfg.sgd.lr_decay_steps = 3;
    cfg.sgd.lr_decay_factor = 0.1;
    TrainResult result = run_training(dataset, cfg);
    CHECK(result.log[0].lr == doctest::Approx(0.01));
    CHECK(result.log[2].lr == doctest::Approx(0.01));
    CHECK(result.log[3].lr == doctest::Approx(0.001));
    CHECK(result.log[6].lr == doctest::Approx(0.0001));
}

TEST_CASE("write_metrics_csv emits one row per step") {
    std::vector<MetricsRow> log;
    log.push_back({1, 0.5, false, 0.0, 0.01});
    log.push_back({2, 0.4, true, 0.75, 0.01});
    std::string path = "/tmp/wseg_metrics_test.csv";
    write_metrics_csv(path, log);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "step,loss,miou,lr");
    std::getline(in, line);
    CHECK(line == "1,0.5,,0.01");
    std::getline(in, line);
    CHECK(line == "2,0.4,0.750000,0.01");
}
