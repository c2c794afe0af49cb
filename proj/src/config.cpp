#include "wseg/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "wseg/common.hpp"

namespace wseg {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        int out = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return out;
    } catch (...) {
        throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        unsigned long long out = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return static_cast<uint64_t>(out);
    } catch (...) {
        throw ConfigError("config: '" + key + "' expects an unsigned integer, got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return out;
    } catch (...) {
        throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
    }
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    if (trim(v).empty()) return out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_int(key, trim(item)));
    return out;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

struct Entry {
    const char* key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

std::string shape_kinds_to_string(const std::vector<ShapeKind>& kinds) {
    std::string out;
    for (size_t i = 0; i < kinds.size(); ++i) {
        if (i) out += ',';
        switch (kinds[i]) {
            case ShapeKind::Rect: out += "rect"; break;
            case ShapeKind::Disc: out += "disc"; break;
            case ShapeKind::Triangle: out += "triangle"; break;
        }
    }
    return out;
}

#define INT_ENTRY(name, field) \
    {name, [](RunConfig& c, const std::string& v) { c.field = parse_int(name, v); }, \
     [](const RunConfig& c) { return std::to_string(c.field); }}
#define U64_ENTRY(name, field) \
    {name, [](RunConfig& c, const std::string& v) { c.field = parse_u64(name, v); }, \
     [](const RunConfig& c) { return std::to_string(c.field); }}
#define DBL_ENTRY(name, field) \
    {name, [](RunConfig& c, const std::string& v) { c.field = parse_double(name, v); }, \
     [](const RunConfig& c) { return format_double(c.field); }}
#define STR_ENTRY(name, field) \
    {name, [](RunConfig& c, const std::string& v) { c.field = v; }, \
     [](const RunConfig& c) { return c.field; }}

const std::vector<Entry>& registry() {
    static const std::vector<Entry> entries = {
        U64_ENTRY("seed", seed),
        INT_ENTRY("threads", threads),
        STR_ENTRY("out", out),
        STR_ENTRY("data", data),
        STR_ENTRY("val", val),
        STR_ENTRY("checkpoint", checkpoint),
        STR_ENTRY("pred", pred),

        INT_ENTRY("gen.num_images", gen.num_images),
        INT_ENTRY("gen.height", gen.height),
        INT_ENTRY("gen.width", gen.width),
        INT_ENTRY("gen.classes", gen.num_fg_classes),
        INT_ENTRY("gen.shapes_min", gen.shapes_min),
        INT_ENTRY("gen.shapes_max", gen.shapes_max),
        {"gen.kinds",
         [](RunConfig& c, const std::string& v) { c.gen.kinds = parse_shape_kinds(v); },
         [](const RunConfig& c) { return shape_kinds_to_string(c.gen.kinds); }},
        DBL_ENTRY("gen.size_min", gen.size_min),
        DBL_ENTRY("gen.size_max", gen.size_max),
        DBL_ENTRY("gen.noise", gen.noise),
        DBL_ENTRY("gen.instance_jitter", gen.instance_jitter),
        INT_ENTRY("gen.modes_per_class", gen.modes_per_class),
        INT_ENTRY("gen.multimode_classes", gen.multimode_classes),
        INT_ENTRY("gen.confusable_pairs", gen.confusable_pairs),
        DBL_ENTRY("gen.contrast", gen.contrast),

        {"net.channels",
         [](RunConfig& c, const std::string& v) {
             c.net.hidden_channels = parse_int_list("net.channels", v);
         },
         [](const RunConfig& c) { return join_ints(c.net.hidden_channels); }},
        {"net.kernels",
         [](RunConfig& c, const std::string& v) {
             c.net.kernel_sizes = parse_int_list("net.kernels", v);
         },
         [](const RunConfig& c) { return join_ints(c.net.kernel_sizes); }},
        INT_ENTRY("net.num_labels", net.num_labels),
        U64_ENTRY("net.seed", net.seed),

        DBL_ENTRY("sgd.lr", sgd.lr),
        DBL_ENTRY("sgd.momentum", sgd.momentum),
        DBL_ENTRY("sgd.weight_decay", sgd.weight_decay),
        DBL_ENTRY("sgd.lr_decay_factor", sgd.lr_decay_factor),
        INT_ENTRY("sgd.lr_decay_steps", sgd.lr_decay_steps),
        DBL_ENTRY("sgd.head_lr_multiplier", sgd.head_lr_multiplier),

        INT_ENTRY("train.batch_size", batch_size),
        INT_ENTRY("train.strong_per_batch", strong_per_batch),
        INT_ENTRY("train.steps", steps),
        STR_ENTRY("train.weak_mode", weak_mode),
        STR_ENTRY("train.box_mode", box_mode),
        INT_ENTRY("train.eval_every", eval_every),

        DBL_ENTRY("estep.b_fg", b_fg),
        DBL_ENTRY("estep.b_bg", b_bg),
        DBL_ENTRY("estep.rho_fg", rho_fg),
        DBL_ENTRY("estep.rho_bg", rho_bg),
        U64_ENTRY("estep.adapt_seed", adapt_seed),

        DBL_ENTRY("crf.w_spatial", crf.w_spatial),
        DBL_ENTRY("crf.theta_gamma", crf.theta_gamma),
        DBL_ENTRY("crf.w_bilateral", crf.w_bilateral),
        DBL_ENTRY("crf.theta_alpha", crf.theta_alpha),
        DBL_ENTRY("crf.theta_beta", crf.theta_beta),
        INT_ENTRY("crf.iterations", crf.iterations),

        DBL_ENTRY("bboxseg.alpha", bbox_alpha),
        DBL_ENTRY("bboxseg.neutral_unary", bbox_neutral_unary),

        INT_ENTRY("eval.void_label", eval_void_label),
    };
    return entries;
}

#undef INT_ENTRY
#undef U64_ENTRY
#undef DBL_ENTRY
#undef STR_ENTRY

}  // namespace

void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const Entry& e : registry()) {
        if (key == e.key) {
            e.set(cfg, value);
            return;
        }
    }
    throw ConfigError("config: unknown key '" + key + "'");
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: line " + std::to_string(line_no) + " of " + path +
                              " is not 'key = value'");
        }
        apply_config_line(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

std::string dump_config(const RunConfig& cfg) {
    std::string out;
    for (const Entry& e : registry()) {
        out += e.key;
        out += " = ";
        out += e.get(cfg);
        out += "\n";
    }
    return out;
}

WeakMode parse_weak_mode(const std::string& s) {
    if (s == "em-fixed") return WeakMode::EmFixed;
    if (s == "em-adapt") return WeakMode::EmAdapt;
    throw ConfigError("unknown weak mode '" + s + "' (expected em-fixed or em-adapt)");
}

BoxMode parse_box_mode(const std::string& s) {
    if (s == "bbox-rect") return BoxMode::BboxRect;
    if (s == "bbox-seg") return BoxMode::BboxSeg;
    if (s == "bbox-em-fixed") return BoxMode::BboxEmFixed;
    throw ConfigError("unknown box mode '" + s +
                      "' (expected bbox-rect, bbox-seg or bbox-em-fixed)");
}

std::vector<ShapeKind> parse_shape_kinds(const std::string& csv) {
    std::vector<ShapeKind> kinds;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item == "rect") kinds.push_back(ShapeKind::Rect);
        else if (item == "disc") kinds.push_back(ShapeKind::Disc);
        else if (item == "triangle") kinds.push_back(ShapeKind::Triangle);
        else throw ConfigError("unknown shape kind '" + item + "'");
    }
    if (kinds.empty()) throw ConfigError("gen.kinds: empty shape kind list");
    return kinds;
}

BboxSegConfig make_bbox_seg_config(const RunConfig& cfg) {
    BboxSegConfig out;
    out.alpha = cfg.bbox_alpha;
    out.crf = cfg.crf;
    out.neutral_unary = cfg.bbox_neutral_unary;
    return out;
}

TrainConfig make_train_config(const RunConfig& cfg) {
    TrainConfig t;
    t.batch_size = cfg.batch_size;
    t.strong_per_batch = cfg.strong_per_batch;
    t.steps = cfg.steps;
    t.weak_mode = parse_weak_mode(cfg.weak_mode);
    t.box_mode = parse_box_mode(cfg.box_mode);
    t.b_fg = cfg.b_fg;
    t.b_bg = cfg.b_bg;
    t.adapt.rho_fg = cfg.rho_fg;
    t.adapt.rho_bg = cfg.rho_bg;
    t.bbox_seg = make_bbox_seg_config(cfg);
    t.net = cfg.net;
    t.sgd = cfg.sgd;
    t.eval_every = cfg.eval_every;
    t.threads = cfg.threads;
    t.seed = cfg.seed;
    return t;
}

}  // namespace wseg
