// wseg: synthetic-data segmentation training toolkit.
//
// Subcommands: gen-data, gen-labels, train, infer, eval, estep-debug.
// Every option lives in a flat dotted config tree; --config loads a
// `key = value` file and explicit flags override it. Each run prints its
// fully resolved config to stderr before doing any work. Stdout is reserved
// for result tables. Exit codes: 0 ok, 1 config error, 2 data error.

#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "wseg/bboxlabels.hpp"
#include "wseg/config.hpp"
#include "wseg/data.hpp"
#include "wseg/densecrf.hpp"
#include "wseg/estep.hpp"
#include "wseg/eval.hpp"
#include "wseg/net.hpp"
#include "wseg/train.hpp"

namespace fs = std::filesystem;
using namespace wseg;

namespace {

// Funnels flag values through the same key=value setter the config file
// uses, after parsing, so flags always take precedence over the file.
struct FlagMap {
    CLI::App* cmd;
    RunConfig& run;
    std::deque<std::string> slots;
    std::vector<std::pair<CLI::Option*, std::pair<std::string*, std::string>>> bound;

    FlagMap(CLI::App* c, RunConfig& r) : cmd(c), run(r) {}

    void add(const std::string& flag, const std::string& key, const std::string& help) {
        slots.emplace_back();
        std::string* slot = &slots.back();
        CLI::Option* opt = cmd->add_option(flag, *slot, help);
        bound.push_back({opt, {slot, key}});
    }

    void apply() {
        for (auto& [opt, sk] : bound) {
            if (opt->count() > 0) apply_config_line(run, sk.second, *sk.first);
        }
    }
};

void add_common_flags(FlagMap& flags) {
    flags.add("--seed", "seed", "master RNG seed");
    flags.add("--threads", "threads", "worker threads (results are identical for any value)");
    flags.add("--out", "out", "output directory");
}

void add_net_flags(FlagMap& flags) {
    flags.add("--channels", "net.channels", "hidden conv channels, comma list");
    flags.add("--kernels", "net.kernels", "hidden conv kernel sizes, comma list (odd)");
    flags.add("--num-labels", "net.num_labels", "label count incl. background (0 = infer)");
    flags.add("--net-seed", "net.seed", "weight init seed");
}

void add_crf_flags(FlagMap& flags) {
    flags.add("--w-spatial", "crf.w_spatial", "spatial kernel weight");
    flags.add("--theta-gamma", "crf.theta_gamma", "spatial bandwidth (px)");
    flags.add("--w-bilateral", "crf.w_bilateral", "bilateral kernel weight");
    flags.add("--theta-alpha", "crf.theta_alpha", "bilateral spatial bandwidth (px)");
    flags.add("--theta-beta", "crf.theta_beta", "bilateral color bandwidth");
    flags.add("--crf-iterations", "crf.iterations", "mean-field iterations");
}

std::string find_config_arg(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg == "--config" && i + 1 < argc) return argv[i + 1];
        if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
    }
    return "";
}

void print_resolved_config(const RunConfig& run) {
    std::cerr << "# resolved config\n" << dump_config(run) << "# end config\n";
}

void require(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

int resolve_num_labels(const RunConfig& run, const std::vector<Sample>& data,
                       const std::vector<Sample>& val = {}) {
    if (run.net.num_labels > 0) return run.net.num_labels;
    int n = dataset_num_labels(data);
    if (!val.empty()) n = std::max(n, dataset_num_labels(val));
    return n;
}

// ---------------------------------------------------------------------------

void cmd_gen_data(const RunConfig& run) {
    require(!run.out.empty(), "gen-data: --out is required");
    GenConfig cfg = run.gen;
    cfg.seed = run.seed;
    auto dataset = generate(cfg);
    write_dataset(run.out, dataset);
    std::cerr << "wrote " << dataset.size() << " samples to " << run.out << "\n";
}

void cmd_gen_labels(const RunConfig& run, const std::string& method) {
    require(!run.data.empty(), "gen-labels: --data is required");
    require(!run.out.empty(), "gen-labels: --out is required");
    require(method == "bbox-rect" || method == "bbox-seg",
            "gen-labels: --method must be bbox-rect or bbox-seg");

    auto dataset = read_manifest(run.data, run.net.num_labels);
    for (const Sample& s : dataset) {
        if (s.kind() != AnnotationKind::Boxes) {
            throw DataError("gen-labels: sample '" + s.id + "' is not box-annotated");
        }
    }

    BboxSegConfig seg_cfg = make_bbox_seg_config(run);
    std::vector<LabelMap> maps(dataset.size());
    parallel_for(static_cast<int>(dataset.size()), run.threads, [&](int i) {
        const Sample& s = dataset[static_cast<size_t>(i)];
        maps[static_cast<size_t>(i)] =
            method == "bbox-rect" ? bbox_rect(s.boxes(), s.image.height, s.image.width)
                                  : bbox_seg(s.image, s.boxes(), seg_cfg);
    });

    fs::create_directories(fs::path(run.out) / "images");
    fs::create_directories(fs::path(run.out) / "labels");
    std::string manifest;
    for (size_t i = 0; i < dataset.size(); ++i) {
        const Sample& s = dataset[i];
        std::string img_rel = "images/" + s.id + ".ppm";
        std::string lbl_rel = "labels/" + s.id + ".pgm";
        write_ppm((fs::path(run.out) / img_rel).string(), s.image);
        write_pgm((fs::path(run.out) / lbl_rel).string(), maps[i]);
        manifest += s.id + " " + img_rel + " strong " + lbl_rel + "\n";
    }
    std::ofstream out((fs::path(run.out) / "manifest.txt").string(), std::ios::trunc);
    if (!out) throw DataError("cannot write manifest in " + run.out);
    out << manifest;
    std::cerr << "wrote " << dataset.size() << " " << method << " label maps to " << run.out
              << "\n";
}

void cmd_train(const RunConfig& run_in) {
    RunConfig run = run_in;
    require(!run.data.empty(), "train: --data is required");
    require(!run.out.empty(), "train: --out is required");

    auto data = read_manifest(run.data, run.net.num_labels);
    std::vector<Sample> val;
    if (!run.val.empty()) val = read_manifest(run.val, run.net.num_labels);
    require(!data.empty(), "train: dataset is empty");

    TrainConfig cfg = make_train_config(run);
    cfg.net.num_labels = resolve_num_labels(run, data, val);
    cfg.net.in_channels = data[0].image.channels;

    bool any_weak = false;
    for (const Sample& s : data) any_weak = any_weak || s.kind() != AnnotationKind::Strong;
    if (!any_weak && cfg.strong_per_batch == 0) {
        // an all-strong dataset cannot fill weak slots; train fully supervised
        cfg.strong_per_batch = cfg.batch_size;
        std::cerr << "note: dataset has no weak samples, using strong-only batches\n";
    }

    fs::create_directories(run.out);
    TrainResult result = run_training(data, cfg, val);
    save_checkpoint(result.params, (fs::path(run.out) / "checkpoint.wseg").string());
    write_metrics_csv((fs::path(run.out) / "metrics.csv").string(), result.log);

    const MetricsRow& last = result.log.back();
    std::fprintf(stderr, "finished %d steps: loss %.6f", last.step, last.loss);
    if (last.has_miou) std::fprintf(stderr, ", val mIOU %.4f", last.miou);
    std::fprintf(stderr, "\n");
}

void cmd_infer(const RunConfig& run, bool use_crf) {
    require(!run.data.empty(), "infer: --data is required");
    require(!run.checkpoint.empty(), "infer: --checkpoint is required");
    require(!run.out.empty(), "infer: --out is required");

    NetParams net = load_checkpoint(run.checkpoint);
    auto dataset = read_manifest(run.data, net.config.num_labels);
    fs::create_directories(run.out);

    parallel_for(static_cast<int>(dataset.size()), run.threads, [&](int i) {
        const Sample& s = dataset[static_cast<size_t>(i)];
        ScoreMap scores = forward(net, s.image);
        LabelMap pred = use_crf ? crf_refine(scores, s.image, run.crf) : argmax_labels(scores);
        write_pgm((fs::path(run.out) / (s.id + ".pgm")).string(), pred);
    });
    std::cerr << "wrote " << dataset.size() << " predictions to " << run.out
              << (use_crf ? " (CRF refined)\n" : "\n");
}

void cmd_eval(const RunConfig& run, const std::string& csv_path) {
    require(!run.data.empty(), "eval: --gt is required");
    require(!run.pred.empty(), "eval: --pred is required");

    auto gt = read_manifest(run.data, run.net.num_labels);
    require(!gt.empty(), "eval: ground-truth manifest is empty");

    std::vector<LabelMap> preds(gt.size());
    int max_label = 0;
    for (size_t i = 0; i < gt.size(); ++i) {
        if (gt[i].kind() != AnnotationKind::Strong) {
            throw DataError("eval: sample '" + gt[i].id + "' has no pixel ground truth");
        }
        preds[i] = read_pgm((fs::path(run.pred) / (gt[i].id + ".pgm")).string());
        for (int l : preds[i].labels) max_label = std::max(max_label, l);
        for (int l : gt[i].strong().labels) max_label = std::max(max_label, l);
    }
    int num_labels = run.net.num_labels > 0 ? run.net.num_labels : max_label + 1;

    std::optional<int> void_label;
    if (run.eval_void_label >= 0) void_label = run.eval_void_label;

    ConfusionMatrix cm(num_labels);
    for (size_t i = 0; i < gt.size(); ++i) accumulate(cm, gt[i].strong(), preds[i], void_label);
    IouReport report = mean_iou(cm);

    std::printf("class  iou\n");
    for (int l = 0; l < num_labels; ++l) {
        if (report.defined[static_cast<size_t>(l)]) {
            std::printf("%-6d %.4f\n", l, report.per_class[static_cast<size_t>(l)]);
        } else {
            std::printf("%-6d -\n", l);
        }
    }
    std::printf("mean   %.4f\n", report.mean);

    if (!csv_path.empty()) {
        std::ofstream csv(csv_path, std::ios::trunc);
        if (!csv) throw DataError("cannot write " + csv_path);
        csv << "class,iou\n";
        char buf[64];
        for (int l = 0; l < num_labels; ++l) {
            if (report.defined[static_cast<size_t>(l)]) {
                std::snprintf(buf, sizeof buf, "%d,%.4f\n", l,
                              report.per_class[static_cast<size_t>(l)]);
                csv << buf;
            } else {
                csv << l << ",\n";
            }
        }
        std::snprintf(buf, sizeof buf, "mean,%.4f\n", report.mean);
        csv << buf;
    }
}

void cmd_estep_debug(const RunConfig& run, const std::string& mode, const std::string& id,
                     int index) {
    require(!run.data.empty(), "estep-debug: --data is required");
    require(!run.out.empty(), "estep-debug: --out is required");
    require(mode == "em-fixed" || mode == "em-adapt" || mode == "bbox-em-fixed",
            "estep-debug: --mode must be em-fixed, em-adapt or bbox-em-fixed");

    auto dataset = read_manifest(run.data, run.net.num_labels);
    require(!dataset.empty(), "estep-debug: dataset is empty");

    const Sample* sample = nullptr;
    if (!id.empty()) {
        for (const Sample& s : dataset) {
            if (s.id == id) sample = &s;
        }
        if (!sample) throw DataError("estep-debug: no sample with id '" + id + "'");
    } else {
        require(index >= 0 && index < static_cast<int>(dataset.size()),
                "estep-debug: --index out of range");
        sample = &dataset[static_cast<size_t>(index)];
    }

    int num_labels = resolve_num_labels(run, dataset);
    NetParams net;
    if (!run.checkpoint.empty()) {
        net = load_checkpoint(run.checkpoint);
    } else {
        NetConfig net_cfg = run.net;
        net_cfg.num_labels = num_labels;
        net_cfg.in_channels = sample->image.channels;
        net = init_net(net_cfg);
    }
    ScoreMap scores = forward(net, sample->image);
    num_labels = scores.num_labels;

    // image-level label set for the EM modes, derived when not annotated
    WeakLabels z(num_labels);
    if (sample->kind() == AnnotationKind::ImageLevel) {
        z = sample->weak();
    } else if (sample->kind() == AnnotationKind::Strong) {
        z = weak_labels_from_mask(sample->strong(), num_labels);
    } else {
        for (const Box& b : sample->boxes().boxes) z.set(b.cls);
    }

    LabelMap estep;
    std::vector<double> bias_column(static_cast<size_t>(num_labels), 0.0);
    if (mode == "em-fixed") {
        estep = em_fixed_estep(scores, z, run.b_fg, run.b_bg);
        for (int l = 0; l < num_labels; ++l) {
            bias_column[static_cast<size_t>(l)] = z.has(l) ? (l == 0 ? run.b_bg : run.b_fg) : 0.0;
        }
    } else if (mode == "em-adapt") {
        AdaptParams params{run.rho_fg, run.rho_bg, run.adapt_seed};
        BiasVector biases = em_adapt_biases(scores, z, params);
        bias_column = biases.bias;
        estep = em_adapt_estep(scores, z, params);
    } else {
        if (sample->kind() != AnnotationKind::Boxes) {
            throw ConfigError("estep-debug: bbox-em-fixed needs a box-annotated sample");
        }
        estep = bbox_em_fixed_estep(scores, sample->boxes(), run.b_fg, run.b_bg);
        for (int l = 0; l < num_labels; ++l) {
            bool has_box = false;
            for (const Box& b : sample->boxes().boxes) has_box = has_box || b.cls == l;
            bias_column[static_cast<size_t>(l)] = l == 0 ? run.b_bg : (has_box ? run.b_fg : 0.0);
        }
    }

    fs::create_directories(run.out);
    {
        std::ofstream out((fs::path(run.out) / "scores.txt").string(), std::ios::trunc);
        out << "# y x";
        for (int l = 0; l < num_labels; ++l) out << " s" << l;
        out << "\n";
        for (int y = 0; y < scores.height; ++y) {
            for (int x = 0; x < scores.width; ++x) {
                out << y << " " << x;
                char buf[32];
                for (int l = 0; l < num_labels; ++l) {
                    std::snprintf(buf, sizeof buf, " %.9g", scores.at(y * scores.width + x, l));
                    out << buf;
                }
                out << "\n";
            }
        }
    }
    {
        std::ofstream out((fs::path(run.out) / "biases.txt").string(), std::ios::trunc);
        out << "# mode " << mode;
        if (mode == "bbox-em-fixed") out << " (foreground boost applies inside class boxes only)";
        out << "\n# label bias\n";
        char buf[64];
        for (int l = 0; l < num_labels; ++l) {
            std::snprintf(buf, sizeof buf, "%d %.9g\n", l, bias_column[static_cast<size_t>(l)]);
            out << buf;
        }
    }
    write_pgm((fs::path(run.out) / "estep.pgm").string(), estep);
    std::cerr << "dumped scores, biases and E-step map for '" << sample->id << "' to " << run.out
              << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    RunConfig run;
    std::string config_path = find_config_arg(argc, argv);

    try {
        if (!config_path.empty()) apply_config_file(run, config_path);

        CLI::App app{"weakly- and semi-supervised segmentation training toolkit"};
        app.require_subcommand(1);
        std::string config_dummy;

        // gen-data
        CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
        gen->add_option("--config", config_dummy, "config file (key = value)");
        FlagMap gen_flags(gen, run);
        add_common_flags(gen_flags);
        gen_flags.add("--num-images", "gen.num_images", "images to generate");
        gen_flags.add("--height", "gen.height", "image height");
        gen_flags.add("--width", "gen.width", "image width");
        gen_flags.add("--classes", "gen.classes", "foreground class count");
        gen_flags.add("--shapes-min", "gen.shapes_min", "min shapes per image");
        gen_flags.add("--shapes-max", "gen.shapes_max", "max shapes per image");
        gen_flags.add("--kinds", "gen.kinds", "shape kinds, comma list of rect,disc,triangle");
        gen_flags.add("--size-min", "gen.size_min", "min shape side as a fraction of min(H,W)");
        gen_flags.add("--size-max", "gen.size_max", "max shape side as a fraction of min(H,W)");
        gen_flags.add("--noise", "gen.noise", "color jitter amplitude");
        gen_flags.add("--instance-jitter", "gen.instance_jitter",
                      "per-instance brightness spread");
        gen_flags.add("--modes-per-class", "gen.modes_per_class",
                      "distinct appearance colors per class");
        gen_flags.add("--multimode-classes", "gen.multimode_classes",
                      "trailing classes that get the extra modes (-1 = all)");
        gen_flags.add("--confusable-pairs", "gen.confusable_pairs",
                      "trailing class pairs that share a hue band");
        gen_flags.add("--contrast", "gen.contrast", "guaranteed fg/bg color separation");

        // gen-labels
        CLI::App* glab =
            app.add_subcommand("gen-labels", "derive label maps from a boxes dataset");
        glab->add_option("--config", config_dummy, "config file (key = value)");
        std::string method = "bbox-rect";
        glab->add_option("--method", method, "bbox-rect or bbox-seg");
        FlagMap glab_flags(glab, run);
        add_common_flags(glab_flags);
        glab_flags.add("--data", "data", "boxes manifest");
        glab_flags.add("--alpha", "bboxseg.alpha", "center-area foreground fraction");
        glab_flags.add("--neutral-unary", "bboxseg.neutral_unary", "unary for in-between pixels");
        glab_flags.add("--num-labels", "net.num_labels", "label count (0 = infer)");
        add_crf_flags(glab_flags);

        // train
        CLI::App* train = app.add_subcommand("train", "run the hard-EM/SGD training loop");
        train->add_option("--config", config_dummy, "config file (key = value)");
        FlagMap train_flags(train, run);
        add_common_flags(train_flags);
        train_flags.add("--data", "data", "training manifest");
        train_flags.add("--val", "val", "validation manifest (strong)");
        train_flags.add("--steps", "train.steps", "SGD steps");
        train_flags.add("--batch-size", "train.batch_size", "samples per mini-batch");
        train_flags.add("--strong-per-batch", "train.strong_per_batch",
                        "strong samples per mini-batch");
        train_flags.add("--weak-mode", "train.weak_mode", "em-fixed or em-adapt");
        train_flags.add("--box-mode", "train.box_mode", "bbox-rect, bbox-seg or bbox-em-fixed");
        train_flags.add("--eval-every", "train.eval_every", "validation period in steps");
        train_flags.add("--b-fg", "estep.b_fg", "EM-Fixed foreground bias");
        train_flags.add("--b-bg", "estep.b_bg", "EM-Fixed background bias");
        train_flags.add("--rho-fg", "estep.rho_fg", "EM-Adapt foreground area fraction");
        train_flags.add("--rho-bg", "estep.rho_bg", "EM-Adapt background area fraction");
        train_flags.add("--alpha", "bboxseg.alpha", "Bbox-Seg center fraction");
        train_flags.add("--lr", "sgd.lr", "learning rate");
        train_flags.add("--momentum", "sgd.momentum", "SGD momentum");
        train_flags.add("--weight-decay", "sgd.weight_decay", "L2 weight decay");
        train_flags.add("--lr-decay-steps", "sgd.lr_decay_steps",
                        "multiply lr by the decay factor every N steps (0 = never)");
        train_flags.add("--lr-decay-factor", "sgd.lr_decay_factor", "lr decay factor");
        train_flags.add("--head-lr-multiplier", "sgd.head_lr_multiplier",
                        "learning-rate multiplier for the classifier head");
        add_net_flags(train_flags);
        add_crf_flags(train_flags);

        // infer
        CLI::App* infer = app.add_subcommand("infer", "write predicted label maps");
        infer->add_option("--config", config_dummy, "config file (key = value)");
        bool use_crf = false;
        infer->add_flag("--crf", use_crf, "refine scores with dense-CRF mean field");
        FlagMap infer_flags(infer, run);
        add_common_flags(infer_flags);
        infer_flags.add("--data", "data", "manifest of images to segment");
        infer_flags.add("--checkpoint", "checkpoint", "trained checkpoint");
        add_crf_flags(infer_flags);

        // eval
        CLI::App* eval_cmd = app.add_subcommand("eval", "score predictions against ground truth");
        eval_cmd->add_option("--config", config_dummy, "config file (key = value)");
        std::string csv_path;
        eval_cmd->add_option("--csv", csv_path, "also write the table as CSV");
        FlagMap eval_flags(eval_cmd, run);
        eval_flags.add("--gt", "data", "strong manifest with ground truth");
        eval_flags.add("--pred", "pred", "directory of predicted <id>.pgm maps");
        eval_flags.add("--void-label", "eval.void_label",
                       "label skipped during scoring (-1 = none)");
        eval_flags.add("--num-labels", "net.num_labels", "label count (0 = infer)");
        eval_flags.add("--threads", "threads", "worker threads");

        // estep-debug
        CLI::App* debug = app.add_subcommand(
            "estep-debug", "dump scores, biases and the E-step map for one sample");
        debug->add_option("--config", config_dummy, "config file (key = value)");
        std::string mode = "em-fixed", sample_id;
        int sample_index = 0;
        debug->add_option("--mode", mode, "em-fixed, em-adapt or bbox-em-fixed");
        debug->add_option("--id", sample_id, "sample id (default: first sample)");
        debug->add_option("--index", sample_index, "sample index when --id is not given");
        FlagMap debug_flags(debug, run);
        add_common_flags(debug_flags);
        debug_flags.add("--data", "data", "dataset manifest");
        debug_flags.add("--checkpoint", "checkpoint",
                        "score with this checkpoint (else fresh init)");
        debug_flags.add("--b-fg", "estep.b_fg", "EM-Fixed foreground bias");
        debug_flags.add("--b-bg", "estep.b_bg", "EM-Fixed background bias");
        debug_flags.add("--rho-fg", "estep.rho_fg", "EM-Adapt foreground area fraction");
        debug_flags.add("--rho-bg", "estep.rho_bg", "EM-Adapt background area fraction");
        debug_flags.add("--adapt-seed", "estep.adapt_seed", "EM-Adapt visit-order seed");
        add_net_flags(debug_flags);

        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            return app.exit(e) == 0 ? 0 : 1;
        }

        gen_flags.apply();
        glab_flags.apply();
        train_flags.apply();
        infer_flags.apply();
        eval_flags.apply();
        debug_flags.apply();

        print_resolved_config(run);

        if (gen->parsed()) cmd_gen_data(run);
        else if (glab->parsed()) cmd_gen_labels(run, method);
        else if (train->parsed()) cmd_train(run);
        else if (infer->parsed()) cmd_infer(run, use_crf);
        else if (eval_cmd->parsed()) cmd_eval(run, csv_path);
        else if (debug->parsed()) cmd_estep_debug(run, mode, sample_id, sample_index);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
