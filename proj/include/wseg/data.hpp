#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wseg/core.hpp"

namespace wseg {

enum class ShapeKind { Rect, Disc, Triangle };

// Synthetic scene generator config. Images are a noisy gray background with
// opaque colored shapes, one class per color, painted back to front.
struct GenConfig {
    int num_images = 10;
    int height = 32;
    int width = 32;
    int num_fg_classes = 3;  // labels run 0..num_fg_classes
    int shapes_min = 1;
    int shapes_max = 3;
    std::vector<ShapeKind> kinds = {ShapeKind::Rect, ShapeKind::Disc, ShapeKind::Triangle};
    double size_min = 0.17;  // shape side range as fractions of min(height, width)
    double size_max = 0.40;
    double noise = 0.05;     // per-channel, per-pixel color jitter amplitude
    double instance_jitter = 0.0;  // per-instance brightness spread (hue preserved)
    int modes_per_class = 1;       // distinct appearance colors per class; each
                                   // instance draws one (intra-class variation)
    int multimode_classes = -1;    // how many (trailing) classes get the extra
                                   // modes; -1 = all of them
    int confusable_pairs = 0;      // the last 2*N classes form N look-alike pairs
                                   // whose modes interleave in a shared hue band
    double contrast = 0.3;   // guaranteed min distance of any fg pixel color from the bg mean
    uint64_t seed = 0;
};

// Which instance painted each pixel (-1 = background) plus per-instance
// classes; kept so tight boxes can be derived from visible pixels.
struct InstanceMap {
    int height = 0;
    int width = 0;
    std::vector<int> index;
    std::vector<int> classes;
};

struct GeneratedSample {
    Sample sample;  // Strong annotation with the exact mask
    InstanceMap instances;
};

// Deterministic per seed; each image draws from its own (seed, index)
// stream. Throws DataError if a shape cannot be placed after bounded
// retries, ConfigError for infeasible configs.
std::vector<GeneratedSample> generate(const GenConfig& cfg);

// z_l = 1 iff some pixel carries label l; bit 0 always set.
WeakLabels weak_labels_from_mask(const LabelMap& gt, int num_labels);

// Minimal axis-aligned rectangle over each instance's visible pixels;
// fully occluded instances produce no box.
BoxAnnotation boxes_from_instances(const InstanceMap& instances);

// Label rewrite for cross-dataset unions: target[src] is the new label or
// -1 to drop (dropped pixels become background, weak bits are cleared,
// boxes removed). target[0] must be 0.
struct LabelRemap {
    std::vector<int> target;
    int num_target_labels = 0;
};

Sample remap_sample(const Sample& sample, const LabelRemap& remap);
std::vector<Sample> remap(const std::vector<Sample>& dataset, const LabelRemap& remap);

// netpbm, binary 8-bit. Channel values map to bytes by round(v * 255); the
// generator quantizes to that grid so write-then-read is bit-identical.
void write_ppm(const std::string& path, const Image& image);
Image read_ppm(const std::string& path);
void write_pgm(const std::string& path, const LabelMap& map);
LabelMap read_pgm(const std::string& path);

// Dataset directory layout: images/<id>.ppm, gt/<id>.pgm and one manifest
// per annotation style (manifest_strong.txt, manifest_weak.txt,
// manifest_boxes.txt). Weak manifests omit images with no foreground.
void write_dataset(const std::string& dir, const std::vector<GeneratedSample>& samples);

// Manifest grammar, one sample per line, paths relative to the manifest:
//   <id> <image.ppm> strong <labels.pgm>
//   <id> <image.ppm> weak <l1,l2,...>
//   <id> <image.ppm> boxes <class:x0:y0:x1:y1;...>   ("-" for an empty list)
std::vector<Sample> read_manifest(const std::string& manifest_path, int num_labels = 0);

// Max label mentioned anywhere in the dataset, plus one.
int dataset_num_labels(const std::vector<Sample>& dataset);

}  // namespace wseg
