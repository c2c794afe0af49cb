#include "wseg/train.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "wseg/common.hpp"
#include "wseg/eval.hpp"

namespace wseg {

namespace {

// Endless seeded draw from an index pool, reshuffled each time it runs dry.
class PoolSampler {
public:
    PoolSampler(std::vector<int> indices, uint64_t seed)
        : indices_(std::move(indices)), rng_(seed) {
        rng_.shuffle(indices_);
    }

    bool empty() const { return indices_.empty(); }

    int next() {
        if (pos_ >= indices_.size()) {
            rng_.shuffle(indices_);
            pos_ = 0;
        }
        return indices_[pos_++];
    }

private:
    std::vector<int> indices_;
    size_t pos_ = 0;
    Rng rng_;
};

}  // namespace

OfflineTargets precompute_box_targets(const std::vector<Sample>& dataset, const TrainConfig& cfg) {
    OfflineTargets targets;
    if (cfg.box_mode == BoxMode::BboxEmFixed) return targets;  // online mode, nothing to cache

    std::vector<int> box_samples;
    for (int i = 0; i < static_cast<int>(dataset.size()); ++i) {
        if (dataset[static_cast<size_t>(i)].kind() == AnnotationKind::Boxes) {
            box_samples.push_back(i);
        }
    }
    std::vector<LabelMap> maps(box_samples.size());
    parallel_for(static_cast<int>(box_samples.size()), cfg.threads, [&](int k) {
        const Sample& s = dataset[static_cast<size_t>(box_samples[static_cast<size_t>(k)])];
        if (cfg.box_mode == BoxMode::BboxRect) {
            maps[static_cast<size_t>(k)] = bbox_rect(s.boxes(), s.image.height, s.image.width);
        } else {
            maps[static_cast<size_t>(k)] = bbox_seg(s.image, s.boxes(), cfg.bbox_seg);
        }
    });
    for (size_t k = 0; k < box_samples.size(); ++k) {
        targets[dataset[static_cast<size_t>(box_samples[k])].id] = std::move(maps[k]);
    }
    return targets;
}

EstepResult estep_dispatch(const ScoreMap& scores, const Sample& sample, const TrainConfig& cfg,
                           const OfflineTargets& offline, uint64_t estep_seed) {
    EstepResult result;
    switch (sample.kind()) {
        case AnnotationKind::Strong:
            result.target = sample.strong();
            break;
        case AnnotationKind::ImageLevel:
            if (cfg.weak_mode == WeakMode::EmFixed) {
                result.target = em_fixed_estep(scores, sample.weak(), cfg.b_fg, cfg.b_bg);
            } else {
                AdaptParams params = cfg.adapt;
                params.seed = estep_seed;
                result.target = em_adapt_estep(scores, sample.weak(), params);
            }
            break;
        case AnnotationKind::Boxes:
            if (cfg.box_mode == BoxMode::BboxEmFixed) {
                result.target = bbox_em_fixed_estep(scores, sample.boxes(), cfg.b_fg, cfg.b_bg);
            } else {
                auto it = offline.find(sample.id);
                if (it == offline.end()) {
                    throw ConfigError("estep_dispatch: no precomputed box target for sample '" +
                                      sample.id + "'");
                }
                result.target = it->second;
            }
            break;
    }
    return result;
}

double dataset_miou(const NetParams& net, const std::vector<Sample>& dataset, int threads) {
    if (dataset.empty()) throw ConfigError("dataset_miou: empty dataset");
    const int labels = net.config.num_labels;
    std::vector<ConfusionMatrix> partial(dataset.size());
    parallel_for(static_cast<int>(dataset.size()), threads, [&](int i) {
        const Sample& s = dataset[static_cast<size_t>(i)];
        if (s.kind() != AnnotationKind::Strong) {
            throw ConfigError("dataset_miou: sample '" + s.id + "' has no pixel ground truth");
        }
        ConfusionMatrix cm(labels);
        accumulate(cm, s.strong(), argmax_labels(forward(net, s.image)));
        partial[static_cast<size_t>(i)] = std::move(cm);
    });
    ConfusionMatrix total(labels);
    for (const ConfusionMatrix& cm : partial) total.merge(cm);
    return mean_iou(total).mean;
}

TrainResult run_training(const std::vector<Sample>& dataset, const TrainConfig& cfg,
                         const std::vector<Sample>& val_dataset, const StepObserver& observer) {
    if (dataset.empty()) throw ConfigError("run_training: empty dataset");
    if (cfg.batch_size < 1) throw ConfigError("run_training: batch_size must be >= 1");
    if (cfg.strong_per_batch < 0 || cfg.strong_per_batch > cfg.batch_size) {
        throw ConfigError("run_training: strong_per_batch must lie in [0, batch_size]");
    }
    if (cfg.steps < 1) throw ConfigError("run_training: steps must be >= 1");

    std::vector<int> strong_pool, weak_pool;
    for (int i = 0; i < static_cast<int>(dataset.size()); ++i) {
        if (dataset[static_cast<size_t>(i)].kind() == AnnotationKind::Strong) {
            strong_pool.push_back(i);
        } else {
            weak_pool.push_back(i);
        }
    }
    const int weak_per_batch = cfg.batch_size - cfg.strong_per_batch;
    if (cfg.strong_per_batch > 0 && strong_pool.empty()) {
        throw ConfigError("run_training: strong_per_batch > 0 but the dataset has no strong samples");
    }
    if (weak_per_batch > 0 && weak_pool.empty()) {
        throw ConfigError("run_training: batch needs weak samples but the dataset has none");
    }

    OfflineTargets offline = precompute_box_targets(dataset, cfg);

    TrainResult result;
    result.params = init_net(cfg.net);
    std::vector<double> velocity(result.params.theta.size(), 0.0);
    std::vector<double> lr_scale = head_lr_scale(result.params, cfg.sgd.head_lr_multiplier);

    PoolSampler strong_sampler(std::move(strong_pool), mix_seed(cfg.seed, 0xA11CE));
    PoolSampler weak_sampler(std::move(weak_pool), mix_seed(cfg.seed, 0xB0B));

    const int B = cfg.batch_size;
    std::vector<double> losses(static_cast<size_t>(B));
    std::vector<std::vector<double>> grads(static_cast<size_t>(B));
    std::vector<LabelMap> targets(static_cast<size_t>(B));
    std::vector<int> batch(static_cast<size_t>(B));

    for (int step = 1; step <= cfg.steps; ++step) {
        double lr = cfg.sgd.lr;
        if (cfg.sgd.lr_decay_steps > 0) {
            int decays = (step - 1) / cfg.sgd.lr_decay_steps;
            for (int d = 0; d < decays; ++d) lr *= cfg.sgd.lr_decay_factor;
        }

        for (int s = 0; s < cfg.strong_per_batch; ++s) batch[static_cast<size_t>(s)] = strong_sampler.next();
        for (int s = cfg.strong_per_batch; s < B; ++s) batch[static_cast<size_t>(s)] = weak_sampler.next();

        const uint64_t step_seed = mix_seed(cfg.seed, static_cast<uint64_t>(step));
        parallel_for(B, cfg.threads, [&](int s) {
            const Sample& sample = dataset[static_cast<size_t>(batch[static_cast<size_t>(s)])];
            EstepResult estep;
            if (sample.kind() == AnnotationKind::Strong) {
                // ground truth needs no scores
                estep = estep_dispatch(ScoreMap(), sample, cfg, offline, 0);
            } else {
                ScoreMap scores = forward(result.params, sample.image);
                estep = estep_dispatch(scores, sample, cfg, offline,
                                       mix_seed(step_seed, static_cast<uint64_t>(s)));
            }
            LossGrad lg = loss_and_grad(result.params, sample.image, estep.target, estep.ignore);
            losses[static_cast<size_t>(s)] = lg.loss;
            grads[static_cast<size_t>(s)] = std::move(lg.grad);
            targets[static_cast<size_t>(s)] = std::move(estep.target);
        });

        // reduce in slot order so the result is schedule-independent
        double loss = 0.0;
        std::vector<double> grad(result.params.theta.size(), 0.0);
        for (int s = 0; s < B; ++s) {
            loss += losses[static_cast<size_t>(s)];
            const std::vector<double>& g = grads[static_cast<size_t>(s)];
            for (size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
        }
        loss /= B;
        const double inv_b = 1.0 / B;
        for (double& g : grad) g *= inv_b;

        sgd_update(result.params.theta, velocity, grad, lr, cfg.sgd.momentum,
                   cfg.sgd.weight_decay, lr_scale);

        MetricsRow row;
        row.step = step;
        row.loss = loss;
        row.lr = lr;
        bool eval_now = !val_dataset.empty() &&
                        (step == cfg.steps || (cfg.eval_every > 0 && step % cfg.eval_every == 0));
        if (eval_now) {
            row.has_miou = true;
            row.miou = dataset_miou(result.params, val_dataset, cfg.threads);
        }
        result.log.push_back(row);

        if (observer) {
            StepInfo info;
            info.step = step;
            info.loss = loss;
            info.lr = lr;
            for (int s = 0; s < B; ++s) {
                info.batch.push_back(&dataset[static_cast<size_t>(batch[static_cast<size_t>(s)])]);
            }
            info.targets = &targets;
            observer(info);
        }
    }
    return result;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& log) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open metrics CSV for writing: " + path);
    out << "step,loss,miou,lr\n";
    char buf[128];
    for (const MetricsRow& row : log) {
        if (row.has_miou) {
            std::snprintf(buf, sizeof buf, "%d,%.9g,%.6f,%.9g\n", row.step, row.loss, row.miou,
                          row.lr);
        } else {
            std::snprintf(buf, sizeof buf, "%d,%.9g,,%.9g\n", row.step, row.loss, row.lr);
        }
        out << buf;
    }
    if (!out) throw DataError("failed writing metrics CSV: " + path);
}

}  // namespace wseg
