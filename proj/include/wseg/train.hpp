#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "wseg/bboxlabels.hpp"
#include "wseg/core.hpp"
#include "wseg/estep.hpp"
#include "wseg/net.hpp"

namespace wseg {

struct SgdConfig {
    double lr = 0.001;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    double lr_decay_factor = 0.1;
    int lr_decay_steps = 0;  // 0 disables the step decay
    double head_lr_multiplier = 10.0;
};

enum class WeakMode { EmFixed, EmAdapt };
enum class BoxMode { BboxRect, BboxSeg, BboxEmFixed };

struct TrainConfig {
    int batch_size = 10;
    int strong_per_batch = 0;  // fixed strong/weak proportion per mini-batch
    int steps = 100;
    WeakMode weak_mode = WeakMode::EmFixed;
    BoxMode box_mode = BoxMode::BboxRect;
    double b_fg = 5.0;
    double b_bg = 3.0;
    AdaptParams adapt;        // rho values; the seed is re-derived per E-step call
    BboxSegConfig bbox_seg;   // offline Bbox-Seg label estimation
    NetConfig net;
    SgdConfig sgd;
    int eval_every = 0;       // 0: validation mIOU only at the final step
    int threads = 1;
    uint64_t seed = 0;
};

struct EstepResult {
    LabelMap target;
    std::vector<uint8_t> ignore;  // empty = nothing ignored
};

// Targets for box-annotated samples in the offline modes (Bbox-Rect /
// Bbox-Seg), computed once before training and reused every epoch.
using OfflineTargets = std::map<std::string, LabelMap>;

OfflineTargets precompute_box_targets(const std::vector<Sample>& dataset, const TrainConfig& cfg);

// Routes one sample to its E-step: ground truth verbatim for strong samples,
// the configured EM variant for image-level ones, and either the cached
// offline map or the online box-gated E-step for box annotations.
// estep_seed feeds the adaptive variant's visit order.
EstepResult estep_dispatch(const ScoreMap& scores, const Sample& sample, const TrainConfig& cfg,
                           const OfflineTargets& offline, uint64_t estep_seed);

struct StepInfo {
    int step = 0;  // 1-based
    double loss = 0.0;
    double lr = 0.0;
    std::vector<const Sample*> batch;       // slot order: strong first
    const std::vector<LabelMap>* targets = nullptr;  // parallel to batch
};
using StepObserver = std::function<void(const StepInfo&)>;

struct MetricsRow {
    int step = 0;
    double loss = 0.0;
    bool has_miou = false;
    double miou = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    NetParams params;
    std::vector<MetricsRow> log;
};

// Hard-EM / SGD outer loop. Each step bundles strong_per_batch strong and
// (batch_size - strong_per_batch) weak samples (seeded draws, reshuffled per
// epoch), recomputes weak targets from the current scores, averages the
// batch gradient in slot order and applies one momentum-SGD update. Fully
// deterministic given (dataset, cfg); independent of cfg.threads.
TrainResult run_training(const std::vector<Sample>& dataset, const TrainConfig& cfg,
                         const std::vector<Sample>& val_dataset = {},
                         const StepObserver& observer = {});

// mIOU of argmax predictions over a strong dataset (no CRF).
double dataset_miou(const NetParams& net, const std::vector<Sample>& dataset, int threads);

// Append-only CSV: step,loss,miou,lr (miou blank on non-validation rows).
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& log);

}  // namespace wseg
