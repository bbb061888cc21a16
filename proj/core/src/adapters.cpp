#include "microcount/adapters.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>

#include "microcount/errors.hpp"
#include "microcount/pngio.hpp"

namespace microcount::adapt {

namespace {

constexpr int64_t kInf = int64_t(1) << 50;

// 1D squared distance transform (lower envelope of parabolas).
void edt_1d(const int64_t* f, int n, int64_t* d, int* v, double* z) {
    int k = 0;
    v[0] = 0;
    z[0] = -1e30;
    z[1] = 1e30;
    for (int q = 1; q < n; ++q) {
        double s;
        for (;;) {
            const int p = v[k];
            s = (static_cast<double>(f[q] - f[p]) + static_cast<double>(q) * q -
                 static_cast<double>(p) * p) /
                (2.0 * (q - p));
            if (s > z[k]) break;
            --k;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = 1e30;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const int64_t dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

const int kDx8[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
const int kDy8[8] = {-1, -1, -1, 0, 0, 1, 1, 1};

std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir,
                                              const std::string& ext) {
    std::vector<std::filesystem::path> files;
    if (!std::filesystem::is_directory(dir)) return files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ext) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace

std::vector<int64_t> squared_distance_transform(const GrayU8& mask) {
    const int W = mask.width, H = mask.height;
    std::vector<int64_t> dt(static_cast<size_t>(W) * H);
    // Column pass over the 0/inf indicator, then row pass on the result.
    {
        std::vector<int64_t> f(H), d(H);
        std::vector<int> v(H);
        std::vector<double> z(H + 1);
        for (int x = 0; x < W; ++x) {
            for (int y = 0; y < H; ++y) f[y] = mask.at(x, y) ? kInf : 0;
            edt_1d(f.data(), H, d.data(), v.data(), z.data());
            for (int y = 0; y < H; ++y) dt[static_cast<size_t>(y) * W + x] = d[y];
        }
    }
    {
        std::vector<int64_t> f(W), d(W);
        std::vector<int> v(W);
        std::vector<double> z(W + 1);
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) f[x] = dt[static_cast<size_t>(y) * W + x];
            edt_1d(f.data(), W, d.data(), v.data(), z.data());
            for (int x = 0; x < W; ++x) dt[static_cast<size_t>(y) * W + x] = d[x];
        }
    }
    return dt;
}

int count_connected_components(const GrayU8& mask) {
    const int W = mask.width, H = mask.height;
    std::vector<uint8_t> seen(static_cast<size_t>(W) * H, 0);
    std::vector<int> stack;
    int components = 0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const size_t idx = static_cast<size_t>(y) * W + x;
            if (!mask.pixels[idx] || seen[idx]) continue;
            ++components;
            seen[idx] = 1;
            stack.push_back(static_cast<int>(idx));
            while (!stack.empty()) {
                const int cur = stack.back();
                stack.pop_back();
                const int cx = cur % W, cy = cur / W;
                for (int n = 0; n < 8; ++n) {
                    const int nx = cx + kDx8[n], ny = cy + kDy8[n];
                    if (nx < 0 || nx >= W || ny < 0 || ny >= H) continue;
                    const size_t ni = static_cast<size_t>(ny) * W + nx;
                    if (mask.pixels[ni] && !seen[ni]) {
                        seen[ni] = 1;
                        stack.push_back(static_cast<int>(ni));
                    }
                }
            }
        }
    return components;
}

namespace {

struct MaskGraph {
    int W = 0, H = 0;
    std::vector<int32_t> component;  // -1 for background
    int n_components = 0;
    std::vector<int64_t> dt;
};

MaskGraph build_mask_graph(const GrayU8& mask) {
    MaskGraph g;
    g.W = mask.width;
    g.H = mask.height;
    g.component.assign(static_cast<size_t>(g.W) * g.H, -1);
    std::vector<int> stack;
    for (int y = 0; y < g.H; ++y)
        for (int x = 0; x < g.W; ++x) {
            const size_t idx = static_cast<size_t>(y) * g.W + x;
            if (!mask.pixels[idx] || g.component[idx] >= 0) continue;
            const int32_t id = g.n_components++;
            g.component[idx] = id;
            stack.push_back(static_cast<int>(idx));
            while (!stack.empty()) {
                const int cur = stack.back();
                stack.pop_back();
                const int cx = cur % g.W, cy = cur / g.W;
                for (int n = 0; n < 8; ++n) {
                    const int nx = cx + kDx8[n], ny = cy + kDy8[n];
                    if (nx < 0 || nx >= g.W || ny < 0 || ny >= g.H) continue;
                    const size_t ni = static_cast<size_t>(ny) * g.W + nx;
                    if (mask.pixels[ni] && g.component[ni] < 0) {
                        g.component[ni] = id;
                        stack.push_back(static_cast<int>(ni));
                    }
                }
            }
        }
    g.dt = squared_distance_transform(mask);
    return g;
}

struct Marker {
    int x, y;
    int64_t dt;
    int32_t component;
};

// Regional maxima of the distance transform: 8-connected plateaus of equal
// value with no strictly greater neighbor. One representative (first pixel
// in scan order) per plateau, then greedy suppression of markers closer
// than the minimum separation within the same component.
std::vector<Marker> find_markers(const MaskGraph& g, const WatershedOptions& options) {
    const int W = g.W, H = g.H;
    std::vector<uint8_t> state(static_cast<size_t>(W) * H, 0);  // 1 visited
    std::vector<Marker> candidates;
    std::vector<int> plateau, stack;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const size_t idx = static_cast<size_t>(y) * W + x;
            if (g.component[idx] < 0 || state[idx]) continue;
            const int64_t value = g.dt[idx];
            plateau.clear();
            stack.push_back(static_cast<int>(idx));
            state[idx] = 1;
            bool is_max = true;
            while (!stack.empty()) {
                const int cur = stack.back();
                stack.pop_back();
                plateau.push_back(cur);
                const int cx = cur % W, cy = cur / W;
                for (int n = 0; n < 8; ++n) {
                    const int nx = cx + kDx8[n], ny = cy + kDy8[n];
                    if (nx < 0 || nx >= W || ny < 0 || ny >= H) continue;
                    const size_t ni = static_cast<size_t>(ny) * W + nx;
                    if (g.component[ni] < 0) continue;
                    if (g.dt[ni] > value) is_max = false;
                    if (g.dt[ni] == value && !state[ni]) {
                        state[ni] = 1;
                        stack.push_back(static_cast<int>(ni));
                    }
                }
            }
            if (is_max) {
                const int first = *std::min_element(plateau.begin(), plateau.end());
                candidates.push_back(
                    {first % W, first / W, value, g.component[static_cast<size_t>(first)]});
            }
        }

    std::stable_sort(candidates.begin(), candidates.end(), [](const Marker& a, const Marker& b) {
        if (a.dt != b.dt) return a.dt > b.dt;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });
    const double min_sep_sq = options.min_marker_separation * options.min_marker_separation;
    std::vector<Marker> accepted;
    for (const Marker& m : candidates) {
        bool keep = true;
        for (const Marker& a : accepted) {
            if (a.component != m.component) continue;
            const double dx = a.x - m.x, dy = a.y - m.y;
            if (dx * dx + dy * dy < min_sep_sq) {
                keep = false;
                break;
            }
        }
        if (keep) accepted.push_back(m);
    }
    return accepted;
}

}  // namespace

WatershedResult watershed_segment(const GrayU8& mask, const WatershedOptions& options) {
    MaskGraph g = build_mask_graph(mask);
    std::vector<Marker> markers = find_markers(g, options);

    WatershedResult result;
    result.count = static_cast<int>(markers.size());
    result.labels.assign(static_cast<size_t>(g.W) * g.H, 0);

    // Meyer flooding on the negated distance transform: highest distance
    // first, FIFO among equals for determinism.
    struct QueueEntry {
        int64_t dt;
        uint64_t order;
        int idx;
    };
    auto cmp = [](const QueueEntry& a, const QueueEntry& b) {
        if (a.dt != b.dt) return a.dt < b.dt;  // max-heap on dt
        return a.order > b.order;
    };
    std::priority_queue<QueueEntry, std::vector<QueueEntry>, decltype(cmp)> queue(cmp);
    uint64_t order = 0;
    for (size_t i = 0; i < markers.size(); ++i) {
        const Marker& m = markers[i];
        const size_t idx = static_cast<size_t>(m.y) * g.W + m.x;
        result.labels[idx] = static_cast<int32_t>(i + 1);
        queue.push({m.dt, order++, static_cast<int>(idx)});
    }
    while (!queue.empty()) {
        const QueueEntry e = queue.top();
        queue.pop();
        const int cx = e.idx % g.W, cy = e.idx / g.W;
        const int32_t label = result.labels[static_cast<size_t>(e.idx)];
        for (int n = 0; n < 8; ++n) {
            const int nx = cx + kDx8[n], ny = cy + kDy8[n];
            if (nx < 0 || nx >= g.W || ny < 0 || ny >= g.H) continue;
            const size_t ni = static_cast<size_t>(ny) * g.W + nx;
            if (g.component[ni] < 0 || result.labels[ni] != 0) continue;
            result.labels[ni] = label;
            queue.push({g.dt[ni], order++, static_cast<int>(ni)});
        }
    }
    return result;
}

int count_from_mask(const GrayU8& mask, const WatershedOptions& options) {
    MaskGraph g = build_mask_graph(mask);
    return static_cast<int>(find_markers(g, options).size());
}

PointCount count_from_points(const GrayU8& annotation) {
    PointCount out;
    for (int y = 0; y < annotation.height; ++y)
        for (int x = 0; x < annotation.width; ++x)
            if (annotation.at(x, y)) {
                ++out.count;
                out.coordinates.push_back({static_cast<double>(x), static_cast<double>(y)});
            }
    return out;
}

std::vector<Patch> patch_image(const ImageU8& image, const DatasetRecord& record, int rows,
                               int cols) {
    if (rows <= 0 || cols <= 0) throw ConfigError("patch grid must be positive");
    if (rows > image.height || cols > image.width)
        throw ConfigError("patch grid larger than image");
    if (rows == 1 && cols == 1) {
        Patch p{image, record};
        p.record.lineage = record.lineage.empty() ? "r0c0" : record.lineage + "_r0c0";
        return {p};
    }
    if (!record.centroids)
        throw ConfigError("patching requires centroid annotations; dataset '" + record.source +
                          "' carries a global count only");

    const int bw = image.width / cols;
    const int bh = image.height / rows;
    std::vector<std::vector<std::array<double, 2>>> buckets(static_cast<size_t>(rows) * cols);
    for (const auto& c : *record.centroids) {
        int j = std::min(static_cast<int>(c[0] / bw), cols - 1);
        int i = std::min(static_cast<int>(c[1] / bh), rows - 1);
        buckets[static_cast<size_t>(i) * cols + j].push_back(
            {c[0] - static_cast<double>(j) * bw, c[1] - static_cast<double>(i) * bh});
    }

    std::vector<Patch> out;
    out.reserve(buckets.size());
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            const int x0 = j * bw, y0 = i * bh;
            const int w = (j == cols - 1) ? image.width - x0 : bw;
            const int h = (i == rows - 1) ? image.height - y0 : bh;
            Patch p;
            p.image = crop(image, x0, y0, w, h);
            p.record = record;
            auto& bucket = buckets[static_cast<size_t>(i) * cols + j];
            p.record.count = static_cast<int>(bucket.size());
            p.record.centroids = std::move(bucket);
            std::string tag = "r" + std::to_string(i) + "c" + std::to_string(j);
            p.record.lineage = record.lineage.empty() ? tag : record.lineage + "_" + tag;
            out.push_back(std::move(p));
        }
    return out;
}

std::vector<Patch> augment(const ImageU8& image, const DatasetRecord& record) {
    const double W = image.width, H = image.height;
    using XY = std::array<double, 2>;
    struct Variant {
        const char* tag;
        ImageU8 (*pixels)(const ImageU8&);
        XY (*map)(const XY&, double, double);
    };
    static const Variant variants[] = {
        {"hflip", flip_horizontal, [](const XY& c, double w, double) -> XY { return {w - 1 - c[0], c[1]}; }},
        {"vflip", flip_vertical, [](const XY& c, double, double h) -> XY { return {c[0], h - 1 - c[1]}; }},
        {"rot90", rotate90, [](const XY& c, double w, double) -> XY { return {c[1], w - 1 - c[0]}; }},
        {"rot180", rotate180, [](const XY& c, double w, double h) -> XY { return {w - 1 - c[0], h - 1 - c[1]}; }},
        {"rot270", rotate270, [](const XY& c, double, double h) -> XY { return {h - 1 - c[1], c[0]}; }},
    };

    std::vector<Patch> out;
    out.reserve(6);
    Patch orig{image, record};
    orig.record.lineage = record.lineage.empty() ? "orig" : record.lineage + "_orig";
    out.push_back(std::move(orig));
    for (const Variant& v : variants) {
        Patch p;
        p.image = v.pixels(image);
        p.record = record;
        if (record.centroids) {
            std::vector<XY> cs;
            cs.reserve(record.centroids->size());
            for (const auto& c : *record.centroids) cs.push_back(v.map(c, W, H));
            p.record.centroids = std::move(cs);
        }
        p.record.lineage = record.lineage.empty() ? v.tag : record.lineage + "_" + v.tag;
        out.push_back(std::move(p));
    }
    return out;
}

void validate(const NormalizationStats& stats) {
    for (double s : stats.stddev)
        if (!(s > 0.0)) throw ConfigError("normalization stddev must be positive per channel");
}

std::vector<float> preprocess(const ImageU8& image, const NormalizationStats& stats, int size) {
    validate(stats);
    std::vector<float> chw = resize_bilinear_chw(image, size, size);
    const size_t plane = static_cast<size_t>(size) * size;
    for (int c = 0; c < 3; ++c) {
        const float mean = static_cast<float>(stats.mean[c]);
        const float inv_std = static_cast<float>(1.0 / stats.stddev[c]);
        float* p = chw.data() + c * plane;
        for (size_t i = 0; i < plane; ++i) p[i] = (p[i] - mean) * inv_std;
    }
    return chw;
}

NormalizationStats compute_dataset_stats(const Manifest& manifest) {
    if (manifest.records.empty()) throw InputError("cannot compute stats of an empty manifest");
    double sum[3] = {0, 0, 0}, sum_sq[3] = {0, 0, 0};
    double count = 0;
    for (const auto& rec : manifest.records) {
        ImageU8 img = read_png(manifest.resolve(rec));
        double s[3] = {0, 0, 0}, ss[3] = {0, 0, 0};
        const size_t n = static_cast<size_t>(img.width) * img.height;
        for (size_t i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) {
                const double v = img.pixels[i * 3 + c] / 255.0;
                s[c] += v;
                ss[c] += v * v;
            }
        for (int c = 0; c < 3; ++c) {
            sum[c] += s[c];
            sum_sq[c] += ss[c];
        }
        count += static_cast<double>(n);
    }
    NormalizationStats stats;
    for (int c = 0; c < 3; ++c) {
        stats.mean[c] = sum[c] / count;
        double var = std::max(0.0, sum_sq[c] / count - stats.mean[c] * stats.mean[c]);
        // accumulation noise on a truly constant channel reads as zero
        if (var < 1e-12) var = 0.0;
        stats.stddev[c] = std::sqrt(var);
    }
    return stats;
}

// ---- dataset adapters ----

namespace {

// Applies optional patching and augmentation to one loaded record and
// appends the resulting records (writing transformed PNGs when needed).
void emit_record(const ImageU8& image, DatasetRecord record, const AdaptOptions& options,
                 const std::filesystem::path& out_dir, const std::filesystem::path& original_path,
                 Manifest& manifest) {
    const bool transforms = options.patch_grid.has_value() || options.augment;
    if (!transforms) {
        record.image = std::filesystem::relative(original_path, out_dir).generic_string();
        manifest.records.push_back(std::move(record));
        return;
    }

    std::vector<Patch> stage1;
    if (options.patch_grid) {
        stage1 = patch_image(image, record, options.patch_grid->first, options.patch_grid->second);
    } else {
        stage1.push_back({image, record});
    }
    std::vector<Patch> stage2;
    if (options.augment) {
        for (const auto& p : stage1) {
            auto variants = augment(p.image, p.record);
            for (auto& v : variants) stage2.push_back(std::move(v));
        }
    } else {
        stage2 = std::move(stage1);
    }

    const std::string stem = original_path.stem().string();
    for (auto& p : stage2) {
        std::string name = stem + "_" + (p.record.lineage.empty() ? "orig" : p.record.lineage) + ".png";
        write_png(out_dir / name, p.image);
        p.record.image = name;
        manifest.records.push_back(std::move(p.record));
    }
}

void layout_error(const std::string& dataset, const std::string& expected) {
    throw InputError("unrecognized " + dataset + " layout; expected " + expected);
}

}  // namespace

Manifest adapt_fnc(const std::filesystem::path& source, const std::filesystem::path& out_dir,
                   const AdaptOptions& options) {
    auto images = list_files(source / "images", ".png");
    if (images.empty())
        layout_error("fnc", "<src>/images/*.png with matching <src>/masks/<stem>.png");
    std::filesystem::create_directories(out_dir);
    Manifest manifest;
    manifest.root = out_dir;
    for (const auto& img_path : images) {
        const auto mask_path = source / "masks" / img_path.filename();
        if (!std::filesystem::exists(mask_path))
            layout_error("fnc", "a mask for every image; missing " + mask_path.string());
        GrayU8 mask = read_png_gray(mask_path);
        // Binarize: any nonzero pixel belongs to the mask.
        for (auto& p : mask.pixels) p = p ? 1 : 0;

        DatasetRecord rec;
        rec.source = "fnc";
        rec.count = count_from_mask(mask, options.watershed);
        ImageU8 image = read_png(img_path);
        // Watershed yields counts only, not centroids, so patching needs the
        // per-instance centroids from the segmentation labels.
        if (options.patch_grid) {
            WatershedResult seg = watershed_segment(mask, options.watershed);
            std::vector<std::array<double, 2>> sums(static_cast<size_t>(seg.count), {0, 0});
            std::vector<int> areas(static_cast<size_t>(seg.count), 0);
            for (int y = 0; y < mask.height; ++y)
                for (int x = 0; x < mask.width; ++x) {
                    const int32_t l = seg.labels[static_cast<size_t>(y) * mask.width + x];
                    if (l > 0) {
                        sums[l - 1][0] += x;
                        sums[l - 1][1] += y;
                        ++areas[l - 1];
                    }
                }
            std::vector<std::array<double, 2>> centroids;
            for (int i = 0; i < seg.count; ++i)
                centroids.push_back({sums[i][0] / areas[i], sums[i][1] / areas[i]});
            rec.centroids = std::move(centroids);
        }
        emit_record(image, rec, options, out_dir, img_path, manifest);
    }
    write_manifest(out_dir / "manifest.jsonl", manifest);
    return manifest;
}

Manifest adapt_vgg(const std::filesystem::path& source, const std::filesystem::path& out_dir,
                   const AdaptOptions& options) {
    auto files = list_files(source, ".png");
    std::vector<std::filesystem::path> cells;
    for (const auto& f : files) {
        const std::string name = f.filename().string();
        if (name.size() > 8 && name.substr(name.size() - 8) == "cell.png") cells.push_back(f);
    }
    if (cells.empty()) layout_error("vgg", "<src>/*cell.png with sibling *dots.png");
    std::filesystem::create_directories(out_dir);
    Manifest manifest;
    manifest.root = out_dir;
    for (const auto& cell_path : cells) {
        std::string dots_name = cell_path.filename().string();
        dots_name.replace(dots_name.size() - 8, 8, "dots.png");
        const auto dots_path = cell_path.parent_path() / dots_name;
        if (!std::filesystem::exists(dots_path))
            layout_error("vgg", "a dots annotation for every image; missing " + dots_path.string());

        PointCount pc = count_from_points(read_png_gray(dots_path));
        DatasetRecord rec;
        rec.source = "vgg";
        rec.count = pc.count;
        rec.centroids = std::move(pc.coordinates);
        emit_record(read_png(cell_path), rec, options, out_dir, cell_path, manifest);
    }
    write_manifest(out_dir / "manifest.jsonl", manifest);
    return manifest;
}

Manifest adapt_cancer(const std::filesystem::path& source, const std::filesystem::path& out_dir,
                      const AdaptOptions& options) {
    if (options.patch_grid)
        throw ConfigError("cancer dataset carries global counts only; patching is not available");
    const auto csv_path = source / "counts.csv";
    std::ifstream in(csv_path);
    if (!in) layout_error("cancer", "<src>/counts.csv with 'image,count' lines");
    std::filesystem::create_directories(out_dir);
    Manifest manifest;
    manifest.root = out_dir;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto comma = line.find_last_of(',');
        if (comma == std::string::npos)
            layout_error("cancer", "'image,count' per line (line " + std::to_string(lineno) + ")");
        const std::string image_rel = line.substr(0, comma);
        int count;
        try {
            count = std::stoi(line.substr(comma + 1));
        } catch (...) {
            if (lineno == 1) continue;  // header row
            throw InputError("cancer counts.csv line " + std::to_string(lineno) +
                             ": count is not an integer");
        }
        if (count < 0)
            throw InputError("cancer counts.csv line " + std::to_string(lineno) + ": negative count");
        const auto img_path = source / image_rel;
        if (!std::filesystem::exists(img_path))
            throw InputError("cancer counts.csv references missing image " + img_path.string());
        DatasetRecord rec;
        rec.source = "cancer";
        rec.count = count;
        emit_record(read_png(img_path), rec, options, out_dir, img_path, manifest);
    }
    if (manifest.records.empty()) layout_error("cancer", "at least one 'image,count' line");
    write_manifest(out_dir / "manifest.jsonl", manifest);
    return manifest;
}

Manifest adapt_synthetic(const std::filesystem::path& source,
                         const std::filesystem::path& out_dir, const AdaptOptions& options) {
    const auto manifest_path = source / "manifest.jsonl";
    if (!std::filesystem::exists(manifest_path))
        layout_error("synthetic", "<src>/manifest.jsonl produced by the generator");
    Manifest in = read_manifest(manifest_path);
    std::filesystem::create_directories(out_dir);
    Manifest manifest;
    manifest.root = out_dir;
    for (const auto& src_rec : in.records) {
        DatasetRecord rec = src_rec;
        rec.source = rec.source.empty() ? "synthetic" : rec.source;
        emit_record(options.patch_grid || options.augment ? read_png(in.resolve(src_rec)) : ImageU8(),
                    rec, options, out_dir, in.resolve(src_rec), manifest);
    }
    write_manifest(out_dir / "manifest.jsonl", manifest);
    return manifest;
}

}  // namespace microcount::adapt
