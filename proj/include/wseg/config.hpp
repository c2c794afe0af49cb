#pragma once

#include <string>
#include <vector>

#include "wseg/data.hpp"
#include "wseg/train.hpp"

namespace wseg {

// The full option tree every command draws from. Defaults here are the
// project defaults; a config file overrides them and command-line flags
// override the file.
struct RunConfig {
    uint64_t seed = 0;
    int threads = 1;
    std::string out;
    std::string data;
    std::string val;
    std::string checkpoint;
    std::string pred;

    GenConfig gen;
    NetConfig net;          // num_labels 0 = infer from the dataset
    SgdConfig sgd;
    int batch_size = 10;
    int strong_per_batch = 0;
    int steps = 100;
    std::string weak_mode = "em-fixed";
    std::string box_mode = "bbox-rect";
    int eval_every = 0;
    double b_fg = 5.0;
    double b_bg = 3.0;
    double rho_fg = 0.2;
    double rho_bg = 0.4;
    uint64_t adapt_seed = 0;  // estep-debug only; training derives its own
    CrfParams crf;
    double bbox_alpha = 0.2;
    double bbox_neutral_unary = 0.0;
    int eval_void_label = -1;  // -1: no void label

    RunConfig() {
        net.num_labels = 0;
        net.hidden_channels = {16};
        net.kernel_sizes = {5};
    }
};

// Flat `key = value` text, dotted section keys, '#' comments. Unknown keys
// are rejected.
void apply_config_file(RunConfig& cfg, const std::string& path);
void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value);

// Canonical dump of every key, suitable both for reproducing a run and for
// reading back with apply_config_file.
std::string dump_config(const RunConfig& cfg);

WeakMode parse_weak_mode(const std::string& s);
BoxMode parse_box_mode(const std::string& s);
std::vector<ShapeKind> parse_shape_kinds(const std::string& csv);

// Assembles the nested training config from the flat tree.
TrainConfig make_train_config(const RunConfig& cfg);
BboxSegConfig make_bbox_seg_config(const RunConfig& cfg);

}  // namespace wseg
