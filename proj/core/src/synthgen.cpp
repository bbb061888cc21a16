#include "microcount/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "microcount/errors.hpp"
#include "microcount/pngio.hpp"

namespace microcount::synth {

namespace {

void check_range(const ParamRange& r, const char* name) {
    if (!(r.min <= r.max)) throw ConfigError(std::string("invalid range for ") + name);
}

std::vector<std::filesystem::path> list_backgrounds(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

// Dark base level plus low-frequency value noise, emulating the uneven
// illumination of a dark-field fluorescent plate.
ImageU8 synthetic_background(const SceneConfig& config, Rng& rng) {
    const BackgroundConfig& bg = config.background;
    double base[3];
    for (double& b : base) b = rng.uniform(bg.base_min, bg.base_max);

    int longer = std::max(config.width, config.height);
    int cell = std::max(1, longer / std::max(1, bg.noise_cells));
    int gw = config.width / cell + 2;
    int gh = config.height / cell + 2;
    std::vector<double> grid(static_cast<size_t>(gw) * gh);
    for (double& g : grid) g = rng.uniform(-bg.noise_amplitude, bg.noise_amplitude);

    ImageU8 img(config.width, config.height);
    for (int y = 0; y < config.height; ++y) {
        double gy = static_cast<double>(y) / cell;
        int y0 = static_cast<int>(gy);
        double fy = gy - y0;
        for (int x = 0; x < config.width; ++x) {
            double gx = static_cast<double>(x) / cell;
            int x0 = static_cast<int>(gx);
            double fx = gx - x0;
            double n00 = grid[static_cast<size_t>(y0) * gw + x0];
            double n10 = grid[static_cast<size_t>(y0) * gw + x0 + 1];
            double n01 = grid[static_cast<size_t>(y0 + 1) * gw + x0];
            double n11 = grid[static_cast<size_t>(y0 + 1) * gw + x0 + 1];
            double noise = (1 - fy) * ((1 - fx) * n00 + fx * n10) + fy * ((1 - fx) * n01 + fx * n11);
            for (int c = 0; c < 3; ++c) {
                double v = std::clamp(base[c] + noise, 0.0, 255.0);
                img.at(x, y, c) = static_cast<uint8_t>(std::lround(v));
            }
        }
    }
    return img;
}

ImageU8 background_plate(const SceneConfig& config, Rng& rng) {
    if (config.background.directory.empty()) return synthetic_background(config, rng);
    auto files = list_backgrounds(config.background.directory);
    if (files.empty())
        throw InputError("background directory has no PNG files: " +
                         config.background.directory.string());
    const auto& pick = files[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(files.size()) - 1))];
    ImageU8 plate = read_png(pick);
    if (plate.width >= config.width && plate.height >= config.height)
        return crop(plate, (plate.width - config.width) / 2, (plate.height - config.height) / 2,
                    config.width, config.height);
    return resize_bilinear(plate, config.width, config.height);
}

}  // namespace

void validate(const SceneConfig& config) {
    if (config.width <= 0 || config.height <= 0) throw ConfigError("scene size must be positive");
    if (config.target_count < 0) throw ConfigError("target_count must be >= 0");
    check_range(config.ranges.sigma, "sigma");
    check_range(config.ranges.intensity_dominant, "intensity_dominant");
    check_range(config.ranges.intensity_other, "intensity_other");
    if (config.ranges.sigma.min <= 0) throw ConfigError("sigma range must be positive");
    if (config.ranges.intensity_dominant.min < 0 || config.ranges.intensity_dominant.max > 1 ||
        config.ranges.intensity_other.min < 0 || config.ranges.intensity_other.max > 1)
        throw ConfigError("intensity ranges must lie in [0, 1]");
    if (config.background.base_min > config.background.base_max)
        throw ConfigError("invalid background base range");
}

BacteriumSpec sample_bacterium(Rng& rng, const SceneConfig& scene) {
    // Draw order is part of the determinism contract: center x, center y,
    // both sigmas, rotation, dominant channel, then channel intensities.
    BacteriumSpec spec;
    spec.center[0] = rng.uniform(0.0, static_cast<double>(scene.width));
    spec.center[1] = rng.uniform(0.0, static_cast<double>(scene.height));
    double s1 = rng.uniform(scene.ranges.sigma.min, scene.ranges.sigma.max);
    double s2 = rng.uniform(scene.ranges.sigma.min, scene.ranges.sigma.max);
    spec.sigma_major = std::max(s1, s2);
    spec.sigma_minor = std::min(s1, s2);
    spec.rotation = rng.uniform(0.0, M_PI);
    int dominant = static_cast<int>(rng.uniform_int(0, 2));
    for (int c = 0; c < 3; ++c) {
        const ParamRange& r =
            (c == dominant) ? scene.ranges.intensity_dominant : scene.ranges.intensity_other;
        spec.peak_intensity[c] = rng.uniform(r.min, r.max);
    }
    return spec;
}

void render_bacterium(Canvas& canvas, const BacteriumSpec& spec) {
    const double reach = 4.0 * spec.sigma_major;
    int x0 = std::max(0, static_cast<int>(std::floor(spec.center[0] - reach)));
    int x1 = std::min(canvas.width - 1, static_cast<int>(std::ceil(spec.center[0] + reach)));
    int y0 = std::max(0, static_cast<int>(std::floor(spec.center[1] - reach)));
    int y1 = std::min(canvas.height - 1, static_cast<int>(std::ceil(spec.center[1] + reach)));

    // Inverse covariance M = R diag(1/s1^2, 1/s2^2) R^T for rotation theta.
    const double ct = std::cos(spec.rotation), st = std::sin(spec.rotation);
    const double i1 = 1.0 / (spec.sigma_major * spec.sigma_major);
    const double i2 = 1.0 / (spec.sigma_minor * spec.sigma_minor);
    const double mxx = ct * ct * i1 + st * st * i2;
    const double myy = st * st * i1 + ct * ct * i2;
    const double mxy = ct * st * (i1 - i2);

    const float a0 = static_cast<float>(spec.peak_intensity[0]);
    const float a1 = static_cast<float>(spec.peak_intensity[1]);
    const float a2 = static_cast<float>(spec.peak_intensity[2]);

    for (int y = y0; y <= y1; ++y) {
        const double dy = y - spec.center[1];
        for (int x = x0; x <= x1; ++x) {
            const double dx = x - spec.center[0];
            const double q = mxx * dx * dx + 2.0 * mxy * dx * dy + myy * dy * dy;
            if (q > 32.0) continue;  // beyond the 4-sigma ellipse; below e^-16
            const float g = static_cast<float>(std::exp(-0.5 * q));
            float* px = &canvas.at(x, y, 0);
            px[0] += a0 * g;
            px[1] += a1 * g;
            px[2] += a2 * g;
        }
    }
}

AnnotatedImage compose_scene(const SceneConfig& config) {
    validate(config);
    Rng rng(config.seed);
    ImageU8 background = background_plate(config, rng);

    Canvas acc(config.width, config.height, 0.f);
    AnnotatedImage out;
    out.centroids.reserve(static_cast<size_t>(config.target_count));
    for (int i = 0; i < config.target_count; ++i) {
        BacteriumSpec spec = sample_bacterium(rng, config);
        render_bacterium(acc, spec);
        out.centroids.push_back(spec.center);
    }
    out.count = config.target_count;

    out.pixels = ImageU8(config.width, config.height);
    const size_t n = acc.values.size();
    for (size_t i = 0; i < n; ++i) {
        float v = static_cast<float>(background.pixels[i]) + 255.f * acc.values[i];
        out.pixels.pixels[i] = static_cast<uint8_t>(std::lround(std::clamp(v, 0.f, 255.f)));
    }
    return out;
}

Manifest generate_dataset(const GenerateOptions& options) {
    if (options.n_images < 0) throw ConfigError("n_images must be >= 0");
    validate(options.scene);
    std::error_code ec;
    std::filesystem::create_directories(options.output_dir, ec);
    if (!std::filesystem::is_directory(options.output_dir))
        throw IoError("output directory not writable: " + options.output_dir.string());

    Manifest manifest;
    manifest.root = options.output_dir;
    manifest.records.reserve(static_cast<size_t>(options.n_images));

    for (int i = 0; i < options.n_images; ++i) {
        SceneConfig scene = options.scene;
        scene.seed = derive_seed(options.scene.seed, static_cast<uint64_t>(i));
        // The count draw comes from the same per-image stream the scene
        // consumes, keeping each image independent of generation order.
        Rng count_rng(derive_seed(scene.seed, 0x636F756E74ULL));
        scene.target_count = options.counts.sample(count_rng);

        AnnotatedImage img;
        try {
            img = compose_scene(scene);
        } catch (const std::exception& e) {
            throw IoError("generation aborted at image " + std::to_string(i) + " of " +
                          std::to_string(options.n_images) + " (" + std::to_string(i) +
                          " images written): " + e.what());
        }

        char name[32];
        std::snprintf(name, sizeof(name), "img_%06d.png", i);
        try {
            write_png(options.output_dir / name, img.pixels);
        } catch (const std::exception& e) {
            throw IoError("generation aborted at image " + std::to_string(i) + " of " +
                          std::to_string(options.n_images) + " (" + std::to_string(i) +
                          " images written): " + e.what());
        }

        DatasetRecord rec;
        rec.image = name;
        rec.count = img.count;
        rec.centroids = img.centroids;
        rec.seed = scene.seed;
        rec.source = "synthetic";
        manifest.records.push_back(std::move(rec));
        if (options.progress) options.progress(i + 1, options.n_images);
    }

    write_manifest(options.output_dir / "manifest.jsonl", manifest);
    return manifest;
}

}  // namespace microcount::synth
