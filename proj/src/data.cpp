#include "wseg/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "wseg/common.hpp"

namespace fs = std::filesystem;

namespace wseg {

namespace {

constexpr double kBgBase[3] = {0.45, 0.45, 0.45};

// Fixed palette for the first classes; further classes walk the hue wheel.
constexpr double kPalette[8][3] = {
    {0.90, 0.10, 0.10},  // red
    {0.10, 0.75, 0.15},  // green
    {0.15, 0.25, 0.90},  // blue
    {0.90, 0.85, 0.10},  // yellow
    {0.85, 0.10, 0.85},  // magenta
    {0.10, 0.85, 0.85},  // cyan
    {0.95, 0.55, 0.10},  // orange
    {0.55, 0.10, 0.85},  // purple
};

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
    double c = v * s;
    double hp = h / 60.0;
    double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    double m = v - c;
    rgb[0] = r + m;
    rgb[1] = g + m;
    rgb[2] = b + m;
}

void class_color(int cls, double rgb[3]) {
    if (cls <= 8) {
        for (int c = 0; c < 3; ++c) rgb[c] = kPalette[cls - 1][c];
        return;
    }
    // golden-angle hue steps keep arbitrary class counts distinct
    double hue = std::fmod(137.507764 * (cls - 1), 360.0);
    hsv_to_rgb(hue, 0.9, 0.9, rgb);
}

// With several appearance modes per class the palette becomes an evenly
// spaced hue wheel, interleaved so adjacent hues belong to different classes.
void mode_color(int cls, int mode, int num_classes, int modes_per_class, double rgb[3]) {
    if (modes_per_class <= 1) {
        class_color(cls, rgb);
        return;
    }
    int slots = num_classes * modes_per_class;
    int index = mode * num_classes + (cls - 1);
    hsv_to_rgb(360.0 * index / slots, 0.85, 0.9, rgb);
}

// All appearance colors an instance of cls may take.
//
// Multi-mode classes share an evenly spaced hue wheel with every other
// class's colors, laid out so all slots are as far apart as possible.
// Confusable-pair classes instead get two modes interleaved with their
// partner inside a shared hue band (deliberate look-alikes).
std::vector<std::array<double, 3>> instance_palette(const GenConfig& cfg, int cls) {
    std::vector<std::array<double, 3>> colors;
    int first_pair_class = cfg.num_fg_classes - 2 * cfg.confusable_pairs + 1;
    if (cfg.confusable_pairs > 0 && cls >= first_pair_class) {
        int k = cls - first_pair_class;  // 0..2*pairs-1
        int pair = k / 2, member = k % 2;
        double band = 28.0 + 110.0 * pair;
        for (int mode = 0; mode < 2; ++mode) {
            std::array<double, 3> rgb{};
            hsv_to_rgb(std::fmod(band + member * 26.0 + mode * 52.0, 360.0), 0.85, 0.9,
                       rgb.data());
            colors.push_back(rgb);
        }
        return colors;
    }

    int multi = cfg.multimode_classes < 0 ? cfg.num_fg_classes
                                          : std::min(cfg.multimode_classes, cfg.num_fg_classes);
    int first_multi_class = cfg.num_fg_classes - multi + 1;
    if (cfg.modes_per_class > 1 && multi < cfg.num_fg_classes) {
        // heterogeneous mode counts: one evenly spaced wheel over all slots,
        // first every class's primary hue, then the extra rounds
        int total = cfg.num_fg_classes + multi * (cfg.modes_per_class - 1);
        std::vector<int> slot_class;
        for (int c = 1; c <= cfg.num_fg_classes; ++c) slot_class.push_back(c);
        for (int round = 1; round < cfg.modes_per_class; ++round) {
            for (int c = first_multi_class; c <= cfg.num_fg_classes; ++c) slot_class.push_back(c);
        }
        for (int j = 0; j < total; ++j) {
            if (slot_class[static_cast<size_t>(j)] != cls) continue;
            std::array<double, 3> rgb{};
            hsv_to_rgb(360.0 * j / total, 0.85, 0.9, rgb.data());
            colors.push_back(rgb);
        }
        return colors;
    }

    for (int mode = 0; mode < cfg.modes_per_class; ++mode) {
        std::array<double, 3> rgb{};
        mode_color(cls, mode, cfg.num_fg_classes, cfg.modes_per_class, rgb.data());
        colors.push_back(rgb);
    }
    return colors;
}

double dist_from_bg(const double rgb[3]) {
    double d2 = 0.0;
    for (int c = 0; c < 3; ++c) {
        double d = rgb[c] - kBgBase[c];
        d2 += d * d;
    }
    return std::sqrt(d2);
}

double quantize(double v) {
    v = std::clamp(v, 0.0, 1.0);
    return std::round(v * 255.0) / 255.0;
}

struct Shape {
    ShapeKind kind;
    int cls;
    // rect/disc/triangle geometry
    int x0, y0, x1, y1;      // rect
    int cx, cy, rad;         // disc
    int ax, ay, bx, by, px, py;  // triangle vertices

    bool covers(int x, int y) const {
        switch (kind) {
            case ShapeKind::Rect:
                return x >= x0 && x <= x1 && y >= y0 && y <= y1;
            case ShapeKind::Disc: {
                long long dx = x - cx, dy = y - cy;
                return dx * dx + dy * dy <= static_cast<long long>(rad) * rad;
            }
            case ShapeKind::Triangle: {
                long long d1 = cross(ax, ay, bx, by, x, y);
                long long d2 = cross(bx, by, px, py, x, y);
                long long d3 = cross(px, py, ax, ay, x, y);
                bool has_neg = d1 < 0 || d2 < 0 || d3 < 0;
                bool has_pos = d1 > 0 || d2 > 0 || d3 > 0;
                return !(has_neg && has_pos);
            }
        }
        return false;
    }

    static long long cross(int ox, int oy, int ex, int ey, int x, int y) {
        return static_cast<long long>(ex - ox) * (y - oy) -
               static_cast<long long>(ey - oy) * (x - ox);
    }
};

void validate_gen_config(const GenConfig& cfg) {
    if (cfg.num_images < 0) throw ConfigError("gen: num_images must be >= 0");
    if (cfg.height < 8 || cfg.width < 8) throw ConfigError("gen: image sides must be >= 8");
    if (cfg.num_fg_classes < 1) throw ConfigError("gen: need at least one foreground class");
    if (cfg.shapes_min < 0 || cfg.shapes_max < cfg.shapes_min) {
        throw ConfigError("gen: invalid shapes-per-image range");
    }
    if (cfg.kinds.empty()) throw ConfigError("gen: shape kind list is empty");
    if (!(cfg.size_min > 0.0) || cfg.size_max > 0.95 || cfg.size_max < cfg.size_min) {
        throw ConfigError("gen: shape size fractions must satisfy 0 < size_min <= size_max <= 0.95");
    }
    if (cfg.noise < 0.0 || cfg.noise > 0.5) throw ConfigError("gen: noise must be in [0, 0.5]");
    if (cfg.instance_jitter < 0.0 || cfg.instance_jitter > 0.6) {
        throw ConfigError("gen: instance_jitter must be in [0, 0.6]");
    }
    if (cfg.modes_per_class < 1) throw ConfigError("gen: modes_per_class must be >= 1");
    if (cfg.multimode_classes < -1 || cfg.multimode_classes > cfg.num_fg_classes) {
        throw ConfigError("gen: multimode_classes must be -1 (all) or in [0, classes]");
    }
    if (cfg.confusable_pairs < 0 || 2 * cfg.confusable_pairs > cfg.num_fg_classes) {
        throw ConfigError("gen: confusable_pairs needs two classes per pair");
    }
    if (cfg.confusable_pairs > 3) throw ConfigError("gen: at most 3 confusable pairs");
    if (cfg.confusable_pairs > 0 && cfg.modes_per_class > 1) {
        throw ConfigError("gen: confusable_pairs and modes_per_class > 1 do not combine");
    }
    if (cfg.contrast < 0.0) throw ConfigError("gen: contrast must be >= 0");

    // Palette feasibility: fg pixel colors deviate from the (brightness
    // jittered) mode color by at most noise per channel, and the measured
    // background mean sits within a small slack of the base color.
    double budget = cfg.contrast + cfg.noise * std::sqrt(3.0) + 0.05;
    for (int cls = 1; cls <= cfg.num_fg_classes; ++cls) {
        for (const auto& rgb : instance_palette(cfg, cls)) {
            for (double factor : {1.0 - cfg.instance_jitter, 1.0, 1.0 + cfg.instance_jitter}) {
                double scaled[3];
                for (int c = 0; c < 3; ++c) scaled[c] = std::clamp(rgb[c] * factor, 0.0, 1.0);
                if (dist_from_bg(scaled) < budget) {
                    throw ConfigError("gen: contrast " + std::to_string(cfg.contrast) +
                                      " with noise " + std::to_string(cfg.noise) +
                                      " and instance_jitter " + std::to_string(cfg.instance_jitter) +
                                      " is not achievable for class " + std::to_string(cls));
                }
            }
        }
    }
}

}  // namespace

std::vector<GeneratedSample> generate(const GenConfig& cfg) {
    validate_gen_config(cfg);

    const int h = cfg.height, w = cfg.width;
    const int side = std::min(h, w);
    const int size_min = std::max(3, static_cast<int>(side * cfg.size_min));
    const int size_max = std::max(size_min, static_cast<int>(side * cfg.size_max));

    std::vector<GeneratedSample> out;
    out.reserve(static_cast<size_t>(cfg.num_images));

    for (int img_idx = 0; img_idx < cfg.num_images; ++img_idx) {
        Rng rng(mix_seed(cfg.seed, static_cast<uint64_t>(img_idx)));

        GeneratedSample gs;
        char idbuf[32];
        std::snprintf(idbuf, sizeof idbuf, "img%05d", img_idx);
        gs.sample.id = idbuf;

        Image image(h, w, 3);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < 3; ++c) {
                    double v = kBgBase[c] + (rng.next_double() * 2.0 - 1.0) * cfg.noise;
                    image.at(x, y, c) = quantize(v);
                }
            }
        }

        LabelMap gt(h, w, 0);
        gs.instances.height = h;
        gs.instances.width = w;
        gs.instances.index.assign(static_cast<size_t>(h) * w, -1);

        int n_shapes = cfg.shapes_min == cfg.shapes_max
                           ? cfg.shapes_min
                           : rng.next_int(cfg.shapes_min, cfg.shapes_max);
        for (int s = 0; s < n_shapes; ++s) {
            Shape shape{};
            shape.kind = cfg.kinds[rng.next_below(cfg.kinds.size())];
            shape.cls = rng.next_int(1, cfg.num_fg_classes);

            bool placed = false;
            for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
                switch (shape.kind) {
                    case ShapeKind::Rect: {
                        int sw = rng.next_int(size_min, size_max);
                        int sh = rng.next_int(size_min, size_max);
                        shape.x0 = rng.next_int(0, w - sw);
                        shape.y0 = rng.next_int(0, h - sh);
                        shape.x1 = shape.x0 + sw - 1;
                        shape.y1 = shape.y0 + sh - 1;
                        placed = true;
                        break;
                    }
                    case ShapeKind::Disc: {
                        shape.rad = rng.next_int(std::max(2, size_min / 2), size_max / 2);
                        shape.cx = rng.next_int(shape.rad, w - 1 - shape.rad);
                        shape.cy = rng.next_int(shape.rad, h - 1 - shape.rad);
                        placed = true;
                        break;
                    }
                    case ShapeKind::Triangle: {
                        int sw = rng.next_int(size_min, size_max);
                        int sh = rng.next_int(size_min, size_max);
                        int bx0 = rng.next_int(0, w - sw);
                        int by0 = rng.next_int(0, h - sh);
                        shape.ax = bx0 + rng.next_int(0, sw - 1);
                        shape.ay = by0 + rng.next_int(0, sh - 1);
                        shape.bx = bx0 + rng.next_int(0, sw - 1);
                        shape.by = by0 + rng.next_int(0, sh - 1);
                        shape.px = bx0 + rng.next_int(0, sw - 1);
                        shape.py = by0 + rng.next_int(0, sh - 1);
                        long long area2 = std::llabs(Shape::cross(shape.ax, shape.ay, shape.bx,
                                                                  shape.by, shape.px, shape.py));
                        // reject slivers: triangle must fill >= 1/8 of its box
                        placed = area2 * 4 >= static_cast<long long>(sw) * sh;
                        break;
                    }
                }
            }
            if (!placed) {
                throw DataError("generate: could not place shape after bounded retries (image " +
                                gs.sample.id + ")");
            }

            int instance_id = static_cast<int>(gs.instances.classes.size());
            gs.instances.classes.push_back(shape.cls);

            auto palette = instance_palette(cfg, shape.cls);
            std::array<double, 3> rgb = palette[rng.next_below(palette.size())];
            if (cfg.instance_jitter > 0.0) {
                double factor = 1.0 + (rng.next_double() * 2.0 - 1.0) * cfg.instance_jitter;
                for (int c = 0; c < 3; ++c) rgb[c] = std::clamp(rgb[c] * factor, 0.0, 1.0);
            }
            int painted = 0;
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    if (!shape.covers(x, y)) continue;
                    size_t m = static_cast<size_t>(y) * w + x;
                    gt.labels[m] = shape.cls;
                    gs.instances.index[m] = instance_id;
                    for (int c = 0; c < 3; ++c) {
                        double v = rgb[c] + (rng.next_double() * 2.0 - 1.0) * cfg.noise;
                        image.at(x, y, c) = quantize(v);
                    }
                    ++painted;
                }
            }
            if (painted == 0) {
                throw DataError("generate: shape rasterized to zero pixels (image " +
                                gs.sample.id + ")");
            }
        }

        gs.sample.image = std::move(image);
        gs.sample.annotation = std::move(gt);
        out.push_back(std::move(gs));
    }
    return out;
}

WeakLabels weak_labels_from_mask(const LabelMap& gt, int num_labels) {
    WeakLabels z(num_labels);
    for (int label : gt.labels) {
        if (label < 0 || label >= num_labels) {
            throw std::invalid_argument("weak_labels_from_mask: label " + std::to_string(label) +
                                        " out of range");
        }
        z.set(label);
    }
    z.set(0);
    return z;
}

BoxAnnotation boxes_from_instances(const InstanceMap& instances) {
    const int n = static_cast<int>(instances.classes.size());
    std::vector<Box> tight(static_cast<size_t>(n));
    std::vector<bool> seen(static_cast<size_t>(n), false);
    for (int y = 0; y < instances.height; ++y) {
        for (int x = 0; x < instances.width; ++x) {
            int id = instances.index[static_cast<size_t>(y) * instances.width + x];
            if (id < 0) continue;
            Box& b = tight[static_cast<size_t>(id)];
            if (!seen[static_cast<size_t>(id)]) {
                seen[static_cast<size_t>(id)] = true;
                b.cls = instances.classes[static_cast<size_t>(id)];
                b.x0 = b.x1 = x;
                b.y0 = b.y1 = y;
            } else {
                b.x0 = std::min(b.x0, x);
                b.x1 = std::max(b.x1, x);
                b.y0 = std::min(b.y0, y);
                b.y1 = std::max(b.y1, y);
            }
        }
    }
    BoxAnnotation out;
    for (int id = 0; id < n; ++id) {
        if (seen[static_cast<size_t>(id)]) out.boxes.push_back(tight[static_cast<size_t>(id)]);
    }
    return out;
}

namespace {

void validate_remap(const LabelRemap& remap) {
    if (remap.target.empty() || remap.target[0] != 0) {
        throw std::invalid_argument("remap: background must map to background");
    }
    if (remap.num_target_labels < 1) {
        throw std::invalid_argument("remap: num_target_labels must be >= 1");
    }
    for (int t : remap.target) {
        if (t >= remap.num_target_labels) {
            throw std::invalid_argument("remap: target label out of range");
        }
    }
}

int mapped_or_throw(const LabelRemap& remap, int src) {
    if (src < 0 || src >= static_cast<int>(remap.target.size())) {
        throw DataError("remap: unmapped source label " + std::to_string(src));
    }
    return remap.target[static_cast<size_t>(src)];
}

}  // namespace

Sample remap_sample(const Sample& sample, const LabelRemap& remap) {
    validate_remap(remap);
    Sample out;
    out.id = sample.id;
    out.image = sample.image;
    switch (sample.kind()) {
        case AnnotationKind::Strong: {
            LabelMap map = sample.strong();
            for (int& l : map.labels) {
                int t = mapped_or_throw(remap, l);
                l = t < 0 ? 0 : t;  // dropped classes become background
            }
            out.annotation = std::move(map);
            break;
        }
        case AnnotationKind::ImageLevel: {
            WeakLabels z(remap.num_target_labels);
            const WeakLabels& src = sample.weak();
            for (int l = 1; l < src.num_labels(); ++l) {
                if (!src.has(l)) continue;
                int t = mapped_or_throw(remap, l);
                if (t >= 1) z.set(t);
            }
            out.annotation = std::move(z);
            break;
        }
        case AnnotationKind::Boxes: {
            BoxAnnotation ann;
            for (const Box& b : sample.boxes().boxes) {
                int t = mapped_or_throw(remap, b.cls);
                if (t < 1) continue;  // dropped or mapped to background: no box
                Box nb = b;
                nb.cls = t;
                ann.boxes.push_back(nb);
            }
            out.annotation = std::move(ann);
            break;
        }
    }
    return out;
}

std::vector<Sample> remap(const std::vector<Sample>& dataset, const LabelRemap& r) {
    std::vector<Sample> out;
    out.reserve(dataset.size());
    for (const Sample& s : dataset) out.push_back(remap_sample(s, r));
    return out;
}

// ---------------------------------------------------------------------------
// netpbm IO
// ---------------------------------------------------------------------------

namespace {

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed: " + path);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Reads one whitespace/comment-delimited header token.
std::string next_token(const std::string& buf, size_t& pos) {
    while (pos < buf.size()) {
        char c = buf[pos];
        if (c == '#') {
            while (pos < buf.size() && buf[pos] != '\n') ++pos;
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            ++pos;
        } else {
            break;
        }
    }
    size_t start = pos;
    while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
    return buf.substr(start, pos - start);
}

int parse_header_int(const std::string& buf, size_t& pos, const std::string& path) {
    std::string tok = next_token(buf, pos);
    try {
        size_t used = 0;
        int v = std::stoi(tok, &used);
        if (used != tok.size() || v < 0) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw DataError("malformed netpbm header in " + path);
    }
}

}  // namespace

void write_ppm(const std::string& path, const Image& image) {
    if (image.channels != 3) throw DataError("write_ppm: image must have 3 channels");
    std::string buf = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                      "\n255\n";
    buf.reserve(buf.size() + static_cast<size_t>(image.pixels()) * 3);
    for (int m = 0; m < image.pixels(); ++m) {
        const double* px = image.pixel(m);
        for (int c = 0; c < 3; ++c) {
            double v = std::clamp(px[c], 0.0, 1.0);
            buf.push_back(static_cast<char>(static_cast<int>(std::lround(v * 255.0))));
        }
    }
    write_file(path, buf);
}

Image read_ppm(const std::string& path) {
    std::string buf = read_file(path);
    size_t pos = 0;
    if (next_token(buf, pos) != "P6") throw DataError("not a binary PPM: " + path);
    int w = parse_header_int(buf, pos, path);
    int h = parse_header_int(buf, pos, path);
    int maxval = parse_header_int(buf, pos, path);
    if (maxval != 255) throw DataError("unsupported PPM maxval in " + path);
    ++pos;  // single whitespace after maxval
    size_t need = static_cast<size_t>(w) * h * 3;
    if (buf.size() - pos < need) throw DataError("truncated PPM: " + path);
    Image image(h, w, 3);
    for (size_t i = 0; i < need; ++i) {
        image.data[i] = static_cast<double>(static_cast<uint8_t>(buf[pos + i])) / 255.0;
    }
    return image;
}

void write_pgm(const std::string& path, const LabelMap& map) {
    std::string buf = "P5\n" + std::to_string(map.width) + " " + std::to_string(map.height) +
                      "\n255\n";
    buf.reserve(buf.size() + static_cast<size_t>(map.pixels()));
    for (int label : map.labels) {
        if (label < 0 || label > 255) {
            throw DataError("write_pgm: label " + std::to_string(label) +
                            " does not fit 8-bit gray");
        }
        buf.push_back(static_cast<char>(label));
    }
    write_file(path, buf);
}

LabelMap read_pgm(const std::string& path) {
    std::string buf = read_file(path);
    size_t pos = 0;
    if (next_token(buf, pos) != "P5") throw DataError("not a binary PGM: " + path);
    int w = parse_header_int(buf, pos, path);
    int h = parse_header_int(buf, pos, path);
    int maxval = parse_header_int(buf, pos, path);
    if (maxval != 255) throw DataError("unsupported PGM maxval in " + path);
    ++pos;
    size_t need = static_cast<size_t>(w) * h;
    if (buf.size() - pos < need) throw DataError("truncated PGM: " + path);
    LabelMap map(h, w);
    for (size_t i = 0; i < need; ++i) {
        map.labels[i] = static_cast<int>(static_cast<uint8_t>(buf[pos + i]));
    }
    return map;
}

// ---------------------------------------------------------------------------
// dataset directories + manifests
// ---------------------------------------------------------------------------

namespace {

std::string boxes_to_field(const BoxAnnotation& ann) {
    if (ann.boxes.empty()) return "-";
    std::string field;
    for (size_t i = 0; i < ann.boxes.size(); ++i) {
        const Box& b = ann.boxes[i];
        if (i) field += ';';
        field += std::to_string(b.cls) + ":" + std::to_string(b.x0) + ":" + std::to_string(b.y0) +
                 ":" + std::to_string(b.x1) + ":" + std::to_string(b.y1);
    }
    return field;
}

BoxAnnotation boxes_from_field(const std::string& field, const std::string& where) {
    BoxAnnotation ann;
    if (field == "-") return ann;
    std::stringstream ss(field);
    std::string entry;
    while (std::getline(ss, entry, ';')) {
        Box b;
        if (std::sscanf(entry.c_str(), "%d:%d:%d:%d:%d", &b.cls, &b.x0, &b.y0, &b.x1, &b.y1) != 5) {
            throw DataError("malformed box entry '" + entry + "' in " + where);
        }
        ann.boxes.push_back(b);
    }
    return ann;
}

std::vector<int> labels_from_field(const std::string& field, const std::string& where) {
    std::vector<int> labels;
    std::stringstream ss(field);
    std::string entry;
    while (std::getline(ss, entry, ',')) {
        try {
            size_t used = 0;
            int l = std::stoi(entry, &used);
            if (used != entry.size() || l < 0) throw std::invalid_argument("");
            labels.push_back(l);
        } catch (...) {
            throw DataError("malformed weak label list '" + field + "' in " + where);
        }
    }
    if (labels.empty()) throw DataError("empty weak label list in " + where);
    return labels;
}

}  // namespace

void write_dataset(const std::string& dir, const std::vector<GeneratedSample>& samples) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "gt");

    std::string manifest_strong, manifest_weak, manifest_boxes;
    for (const GeneratedSample& gs : samples) {
        const Sample& s = gs.sample;
        std::string img_rel = "images/" + s.id + ".ppm";
        std::string gt_rel = "gt/" + s.id + ".pgm";
        write_ppm((fs::path(dir) / img_rel).string(), s.image);
        write_pgm((fs::path(dir) / gt_rel).string(), s.strong());

        manifest_strong += s.id + " " + img_rel + " strong " + gt_rel + "\n";

        int num_labels = 1;
        for (int cls : gs.instances.classes) num_labels = std::max(num_labels, cls + 1);
        WeakLabels z = weak_labels_from_mask(s.strong(), num_labels);
        if (z.foreground_count() > 0) {
            std::string bits;
            for (int l = 0; l < z.num_labels(); ++l) {
                if (z.has(l)) {
                    if (!bits.empty()) bits += ',';
                    bits += std::to_string(l);
                }
            }
            manifest_weak += s.id + " " + img_rel + " weak " + bits + "\n";
        }

        manifest_boxes += s.id + " " + img_rel + " boxes " +
                          boxes_to_field(boxes_from_instances(gs.instances)) + "\n";
    }
    write_file((fs::path(dir) / "manifest_strong.txt").string(), manifest_strong);
    write_file((fs::path(dir) / "manifest_weak.txt").string(), manifest_weak);
    write_file((fs::path(dir) / "manifest_boxes.txt").string(), manifest_boxes);
}

std::vector<Sample> read_manifest(const std::string& manifest_path, int num_labels) {
    std::ifstream in(manifest_path);
    if (!in) throw DataError("cannot open manifest: " + manifest_path);
    fs::path base = fs::path(manifest_path).parent_path();

    struct Record {
        std::string id, image_path, kind, payload;
    };
    std::vector<Record> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        Record rec;
        if (!(ss >> rec.id >> rec.image_path >> rec.kind >> rec.payload)) {
            throw DataError("malformed manifest line " + std::to_string(line_no) + " in " +
                            manifest_path);
        }
        if (rec.kind != "strong" && rec.kind != "weak" && rec.kind != "boxes") {
            throw DataError("unknown annotation kind '" + rec.kind + "' in " + manifest_path);
        }
        records.push_back(std::move(rec));
    }

    // First materialize everything except weak bitsets, then size those with
    // the task label count (inferred across the manifest unless given).
    std::vector<Sample> samples(records.size());
    std::vector<std::vector<int>> weak_lists(records.size());
    int max_label = 0;
    for (size_t i = 0; i < records.size(); ++i) {
        const Record& rec = records[i];
        const std::string where = manifest_path + " (" + rec.id + ")";
        samples[i].id = rec.id;
        samples[i].image = read_ppm((base / rec.image_path).string());
        if (rec.kind == "strong") {
            LabelMap gt = read_pgm((base / rec.payload).string());
            if (gt.height != samples[i].image.height || gt.width != samples[i].image.width) {
                throw DataError("label map dimensions differ from image in " + where);
            }
            for (int l : gt.labels) max_label = std::max(max_label, l);
            samples[i].annotation = std::move(gt);
        } else if (rec.kind == "weak") {
            weak_lists[i] = labels_from_field(rec.payload, where);
            bool any_fg = false;
            for (int l : weak_lists[i]) {
                max_label = std::max(max_label, l);
                if (l >= 1) any_fg = true;
            }
            if (!any_fg) {
                throw DataError("weak sample without foreground labels in " + where);
            }
            samples[i].annotation = WeakLabels();  // placeholder, sized below
        } else {
            BoxAnnotation ann = boxes_from_field(rec.payload, where);
            try {
                validate_boxes(ann, samples[i].image.height, samples[i].image.width);
            } catch (const std::invalid_argument& e) {
                throw DataError(std::string(e.what()) + " in " + where);
            }
            for (const Box& b : ann.boxes) max_label = std::max(max_label, b.cls);
            samples[i].annotation = std::move(ann);
        }
    }

    int task_labels = num_labels > 0 ? num_labels : max_label + 1;
    if (max_label >= task_labels) {
        throw DataError("manifest " + manifest_path + " mentions label " +
                        std::to_string(max_label) + " but num_labels is " +
                        std::to_string(task_labels));
    }
    for (size_t i = 0; i < records.size(); ++i) {
        if (records[i].kind != "weak") continue;
        WeakLabels z(task_labels);
        for (int l : weak_lists[i]) z.set(l);
        samples[i].annotation = std::move(z);
    }
    return samples;
}

int dataset_num_labels(const std::vector<Sample>& dataset) {
    int max_label = 0;
    for (const Sample& s : dataset) {
        switch (s.kind()) {
            case AnnotationKind::Strong:
                for (int l : s.strong().labels) max_label = std::max(max_label, l);
                break;
            case AnnotationKind::ImageLevel:
                for (int l = 0; l < s.weak().num_labels(); ++l) {
                    if (s.weak().has(l)) max_label = std::max(max_label, l);
                }
                break;
            case AnnotationKind::Boxes:
                for (const Box& b : s.boxes().boxes) max_label = std::max(max_label, b.cls);
                break;
        }
    }
    return max_label + 1;
}

}  // namespace wseg
