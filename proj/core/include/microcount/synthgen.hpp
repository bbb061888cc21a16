#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "microcount/image.hpp"
#include "microcount/manifest.hpp"
#include "microcount/rng.hpp"

namespace microcount::synth {

struct ParamRange {
    double min = 0.0;
    double max = 0.0;
    bool contains(double v) const { return v >= min && v <= max; }
};

// One Gaussian-ellipse bacterium. sigma_major >= sigma_minor > 0, rotation
// in [0, pi), peak intensities in [0, 1] per channel.
struct BacteriumSpec {
    std::array<double, 2> center{0, 0};  // pixels, (x, y)
    double sigma_major = 1.0;
    double sigma_minor = 1.0;
    double rotation = 0.0;
    std::array<double, 3> peak_intensity{0, 0, 0};
};

struct ParameterRanges {
    ParamRange sigma{1.5, 6.0};
    // The brightest channel of each bacterium; the remaining two channels
    // draw from `intensity_other`.
    ParamRange intensity_dominant{0.5, 1.0};
    ParamRange intensity_other{0.0, 0.3};
};

struct BackgroundConfig {
    // Empty directory means procedural background: per-image dark base level
    // in [base_min, base_max] per channel plus bilinearly interpolated value
    // noise of amplitude noise_amplitude on a coarse grid.
    std::filesystem::path directory;
    double base_min = 5.0;
    double base_max = 20.0;
    double noise_amplitude = 10.0;
    int noise_cells = 8;  // coarse grid cells along the longer image side
};

struct SceneConfig {
    int width = 3280;
    int height = 2464;
    int target_count = 0;
    BackgroundConfig background;
    ParameterRanges ranges;
    uint64_t seed = 0;
};

struct AnnotatedImage {
    ImageU8 pixels;
    std::vector<std::array<double, 2>> centroids;
    int count = 0;
};

// Throws ConfigError when a range is inverted or a field is out of domain.
void validate(const SceneConfig& config);

// Draws all fields uniformly from the configured ranges and reorders the
// axes so sigma_major >= sigma_minor. Advances `rng` deterministically.
BacteriumSpec sample_bacterium(Rng& rng, const SceneConfig& scene);

// Adds A_c * exp(-1/2 (p-mu)^T R diag(1/s1^2, 1/s2^2) R^T (p-mu)) to every
// channel inside a bounding box of 4*sigma_major around the center. The tail
// outside the box is below e^-8 and cannot move an 8-bit pixel.
void render_bacterium(Canvas& canvas, const BacteriumSpec& spec);

// Background plate + target_count rendered bacteria, quantized as
// clamp(round(background + 255*accumulation), 0, 255). Fully determined by
// config.seed.
AnnotatedImage compose_scene(const SceneConfig& config);

// Integer count distribution for generated scenes; uniform on [lo, hi].
struct CountDistribution {
    int lo = 0;
    int hi = 1855;
    int sample(Rng& rng) const { return static_cast<int>(rng.uniform_int(lo, hi)); }
};

struct GenerateOptions {
    int n_images = 0;
    SceneConfig scene;  // template; per-image seed/count filled in
    CountDistribution counts;
    std::filesystem::path output_dir;
    std::function<void(int done, int total)> progress;  // optional
};

// Writes n_images PNGs plus manifest.jsonl. Per-image seeds derive from
// hash(master_seed, index), so any image can be regenerated independently.
Manifest generate_dataset(const GenerateOptions& options);

}  // namespace microcount::synth
