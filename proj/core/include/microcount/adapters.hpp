#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

#include "microcount/image.hpp"
#include "microcount/manifest.hpp"

namespace microcount::adapt {

// ---- instance counting from heterogeneous ground truths ----

struct WatershedOptions {
    // Minimum Euclidean separation between accepted markers, in pixels.
    double min_marker_separation = 5.0;
};

// Number of distinct instances in a binary mask: 8-connected components,
// each split by marker-based watershed on the negated Euclidean distance
// transform. Markers are regional maxima of the distance transform, merged
// per component when closer than the configured separation. A convex blob
// has exactly one regional maximum, so disjoint convex blobs count like
// plain connected components.
int count_from_mask(const GrayU8& mask, const WatershedOptions& options = {});

// Plain 8-connected component count; the independent oracle for disjoint
// blobs.
int count_connected_components(const GrayU8& mask);

// Optional full segmentation: labels in [1, count], 0 for background.
struct WatershedResult {
    int count = 0;
    std::vector<int32_t> labels;  // height*width
};
WatershedResult watershed_segment(const GrayU8& mask, const WatershedOptions& options = {});

// Squared Euclidean distance to the nearest zero pixel, exact.
std::vector<int64_t> squared_distance_transform(const GrayU8& mask);

struct PointCount {
    int count = 0;
    std::vector<std::array<double, 2>> coordinates;
};
// Nonzero pixels of a point-annotation image.
PointCount count_from_points(const GrayU8& annotation);

// ---- record-level transforms ----

struct Patch {
    ImageU8 image;
    DatasetRecord record;  // counts/centroids rebased into the patch frame
};

// Splits into a rows x cols grid; the remainder goes to the last row/column.
// Centroids are assigned by half-open intervals, so per-patch counts always
// sum to the original count.
std::vector<Patch> patch_image(const ImageU8& image, const DatasetRecord& record, int rows,
                               int cols);

// The original plus the five count-preserving dihedral variants
// (hflip, vflip, rot90, rot180, rot270), centroids transformed to match.
std::vector<Patch> augment(const ImageU8& image, const DatasetRecord& record);

// ---- preprocessing ----

struct NormalizationStats {
    std::array<double, 3> mean{0, 0, 0};
    std::array<double, 3> stddev{1, 1, 1};
};

// Bilinear resize to size x size, then (v/255 - mean)/std per channel.
// Output is planar CHW float32.
std::vector<float> preprocess(const ImageU8& image, const NormalizationStats& stats,
                              int size = 384);

// Per-channel mean/std over the [0,1]-scaled pixels of every record.
// Throws for empty manifests; zero variance in any channel is a
// configuration error at use time (validate() below).
NormalizationStats compute_dataset_stats(const Manifest& manifest);
void validate(const NormalizationStats& stats);

// ---- dataset adapters (native layout -> uniform manifest) ----

struct AdaptOptions {
    std::optional<std::pair<int, int>> patch_grid;  // rows, cols
    bool augment = false;
    WatershedOptions watershed;
};

// Fluorescent Neuronal Cells: <src>/images/*.png + <src>/masks/*.png with
// matching stems; counts come from watershed on the binary masks.
Manifest adapt_fnc(const std::filesystem::path& source, const std::filesystem::path& out_dir,
                   const AdaptOptions& options = {});

// VGG-Cells: <src>/*cell.png with sibling *dots.png centroid annotations.
Manifest adapt_vgg(const std::filesystem::path& source, const std::filesystem::path& out_dir,
                   const AdaptOptions& options = {});

// Human cancer cells: <src>/counts.csv ("image,count" per line) with image
// paths relative to <src>. Global counts only; patching is not available.
Manifest adapt_cancer(const std::filesystem::path& source, const std::filesystem::path& out_dir,
                      const AdaptOptions& options = {});

// Synthetic generator output: re-emits <src>/manifest.jsonl records.
Manifest adapt_synthetic(const std::filesystem::path& source,
                         const std::filesystem::path& out_dir, const AdaptOptions& options = {});

}  // namespace microcount::adapt
