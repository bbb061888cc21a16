// Acceptance suite: runs every release criterion end to end and prints one
// PASS/FAIL line per criterion. Exit status is nonzero if any criterion
// fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <vector>

#include "microcount/adapters.hpp"
#include "microcount/evaluator.hpp"
#include "microcount/flops.hpp"
#include "microcount/manifest.hpp"
#include "microcount/models.hpp"
#include "microcount/pngio.hpp"
#include "microcount/synthgen.hpp"
#include "microcount/tensor.hpp"
#include "microcount/trainer.hpp"

using namespace microcount;

namespace {

struct Criterion {
    std::string name;
    std::function<bool(std::string&)> run;
};

std::filesystem::path work_dir() {
    auto p = std::filesystem::temp_directory_path() / "microcount-acceptance";
    std::filesystem::create_directories(p);
    return p;
}

std::string file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

// ---- 1. parameter-count reproduction ----

bool criterion_parameters(std::string& detail) {
    const std::vector<std::pair<std::string, double>> targets = {
        {"cnn-base", 0.59e6},      {"cnn-medium", 0.61e6},  {"cnn-deep", 0.96e6},
        {"resnet50", 23.53e6},     {"resnet101", 42.54e6},  {"vit-vanilla", 87.50e6},
        {"xcit-s24", 49.82e6},     {"crossvit-ti", 3.07e6}, {"parallelvit-ti", 5.50e6},
        {"deepvit-s", 34.91e6},    {"transcrowd-g", 90.39e6}, {"transcrowd-t", 86.86e6},
    };
    bool ok = true;
    char buf[160];
    for (const auto& [name, target] : targets) {
        models::CountingModel model = models::build_backbone(models::preset(name), 0);
        const double params = static_cast<double>(models::count_parameters(model));
        const double rel = std::fabs(params - target) / target;
        std::snprintf(buf, sizeof(buf), "%s %.0f vs %.3g (%.2f%%); ", name.c_str(), params,
                      target, 100 * rel);
        detail += buf;
        if (rel > 0.05) ok = false;
    }
    return ok;
}

// ---- 2. flops ordering ----

bool criterion_flops(std::string& detail) {
    // published compute column, ascending
    const std::vector<std::string> published_order = {
        "cnn-base",  "cnn-medium",     "crossvit-ti",  "cnn-deep",
        "parallelvit-ti", "resnet50", "vit-vanilla",  "resnet101",
        "xcit-s24",  "deepvit-s",      "transcrowd-t", "transcrowd-g",
    };
    std::vector<std::pair<double, std::string>> measured;
    for (const auto& name : models::preset_names())
        measured.push_back({models::estimate_flops(models::preset(name)), name});
    std::sort(measured.begin(), measured.end());

    bool ok = true;
    for (size_t i = 0; i + 1 < measured.size(); ++i)
        if (!(measured[i].first < measured[i + 1].first)) ok = false;
    for (size_t i = 0; i < measured.size(); ++i) {
        if (measured[i].second != published_order[i]) ok = false;
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%s %.2fe8 ", measured[i].second.c_str(),
                      measured[i].first / 1e8);
        detail += buf;
    }

    const double vit = models::estimate_flops(models::preset("vit-vanilla"));
    const double published_vit = 128.39e8;
    const double ratio = vit > published_vit ? vit / published_vit : published_vit / vit;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "| vit ratio to published %.3f", ratio);
    detail += buf;
    if (ratio > 2.0) ok = false;
    return ok;
}

// ---- 3. generator exactness and determinism ----

bool criterion_generator_exact(std::string& detail) {
    const auto dir_a = work_dir() / "gen-exact-a";
    const auto dir_b = work_dir() / "gen-exact-b";
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);

    synth::GenerateOptions opt;
    opt.n_images = 200;
    opt.scene.width = 512;
    opt.scene.height = 512;
    opt.scene.seed = 20240601;
    opt.counts = {0, 300};
    opt.output_dir = dir_a;
    Manifest a = synth::generate_dataset(opt);

    int mismatches = 0;
    for (const auto& rec : a.records)
        if (!rec.centroids || static_cast<int>(rec.centroids->size()) != rec.count) ++mismatches;

    opt.output_dir = dir_b;
    Manifest b = synth::generate_dataset(opt);
    int byte_diffs = 0;
    for (size_t i = 0; i < a.records.size(); ++i)
        if (file_bytes(dir_a / a.records[i].image) != file_bytes(dir_b / b.records[i].image))
            ++byte_diffs;
    if (file_bytes(dir_a / "manifest.jsonl") != file_bytes(dir_b / "manifest.jsonl")) ++byte_diffs;

    char buf[128];
    std::snprintf(buf, sizeof(buf), "200 images, %d label mismatches, %d byte differences",
                  mismatches, byte_diffs);
    detail += buf;
    return mismatches == 0 && byte_diffs == 0;
}

// ---- 4. generator statistics ----

bool criterion_generator_stats(std::string& detail) {
    const auto dir = work_dir() / "gen-stats";
    std::filesystem::remove_all(dir);
    synth::GenerateOptions opt;
    opt.n_images = 2000;
    opt.scene.width = 128;  // reduced resolution run
    opt.scene.height = 128;
    opt.scene.seed = 7;
    opt.output_dir = dir;  // default [0, 1855] count distribution
    Manifest m = synth::generate_dataset(opt);
    const CountStats stats = m.count_stats();

    char buf[160];
    std::snprintf(buf, sizeof(buf), "min %d max %d mean %.1f (uniform expectation 927.5)",
                  stats.min, stats.max, stats.mean);
    detail += buf;
    const bool mean_ok = std::fabs(stats.mean - 927.5) / 927.5 <= 0.05;
    return stats.min >= 0 && stats.max <= 1855 && mean_ok;
}

// ---- 5. adapter correctness ----

void fill_disc(GrayU8& mask, double cx, double cy, double r) {
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            const double dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy <= r * r) mask.at(x, y) = 1;
        }
}

bool criterion_adapters(std::string& detail) {
    Rng rng(99);
    int blob_pass = 0, blob_total = 0;

    // >= 50 random disjoint-blob masks against the flood-fill oracle
    for (int trial = 0; trial < 60; ++trial) {
        const int size = 96;
        GrayU8 mask(size, size);
        GrayU8 occupied(size, size);
        int placed = 0;
        for (int attempt = 0; attempt < 120 && placed < 14; ++attempt) {
            const int w = static_cast<int>(rng.uniform_int(2, 8));
            const int h = static_cast<int>(rng.uniform_int(2, 8));
            const int x0 = static_cast<int>(rng.uniform_int(1, size - w - 1));
            const int y0 = static_cast<int>(rng.uniform_int(1, size - h - 1));
            bool free = true;
            for (int y = std::max(0, y0 - 2); y < std::min(size, y0 + h + 2) && free; ++y)
                for (int x = std::max(0, x0 - 2); x < std::min(size, x0 + w + 2) && free; ++x)
                    if (occupied.at(x, y)) free = false;
            if (!free) continue;
            for (int y = y0; y < y0 + h; ++y)
                for (int x = x0; x < x0 + w; ++x) mask.at(x, y) = 1;
            for (int y = std::max(0, y0 - 2); y < std::min(size, y0 + h + 2); ++y)
                for (int x = std::max(0, x0 - 2); x < std::min(size, x0 + w + 2); ++x)
                    occupied.at(x, y) = 1;
            ++placed;
        }
        ++blob_total;
        const int oracle = adapt::count_connected_components(mask);
        if (oracle == placed && adapt::count_from_mask(mask) == oracle) ++blob_pass;
    }

    // >= 20 two-overlapping-disc cases resolving to exactly 2
    int disc_pass = 0, disc_total = 0;
    for (int trial = 0; trial < 24; ++trial) {
        const double r = rng.uniform(7.0, 13.0);
        const double d = rng.uniform(1.25, 1.8) * r;
        const int size = static_cast<int>(2 * r + d) + 10;
        GrayU8 mask(size, size);
        fill_disc(mask, size / 2.0 - d / 2, size / 2.0, r);
        fill_disc(mask, size / 2.0 + d / 2, size / 2.0, r);
        if (adapt::count_connected_components(mask) != 1) continue;  // must overlap
        ++disc_total;
        if (adapt::count_from_mask(mask) == 2) ++disc_pass;
    }

    // point counting reproduces generator labels verbatim
    const auto gen_dir = work_dir() / "adapter-syn";
    std::filesystem::remove_all(gen_dir);
    synth::GenerateOptions opt;
    opt.n_images = 30;
    opt.scene.width = 96;
    opt.scene.height = 96;
    opt.scene.seed = 31;
    opt.counts = {0, 50};
    opt.output_dir = gen_dir;
    Manifest generated = synth::generate_dataset(opt);
    Manifest adapted = adapt::adapt_synthetic(gen_dir, work_dir() / "adapter-syn-out");
    int label_mismatch = 0;
    for (size_t i = 0; i < generated.records.size(); ++i)
        if (adapted.records[i].count != generated.records[i].count) ++label_mismatch;

    char buf[160];
    std::snprintf(buf, sizeof(buf), "blobs %d/%d, discs %d/%d, synthetic labels %d mismatches",
                  blob_pass, blob_total, disc_pass, disc_total, label_mismatch);
    detail += buf;
    return blob_pass == blob_total && blob_total >= 50 && disc_pass == disc_total &&
           disc_total >= 20 && label_mismatch == 0;
}

// ---- 6. gradient correctness ----

bool criterion_gradients(std::string& detail) {
    using namespace nn;
    Rng rng(7);
    auto rand_t = [&](Shape shape, double lo = -1.0, double hi = 1.0) {
        std::vector<float> v(shape_numel(shape));
        for (float& x : v) x = static_cast<float>(rng.uniform(lo, hi));
        return Tensor::from_data(std::move(shape), std::move(v));
    };

    double worst = 0.0;
    std::string worst_name;
    auto track = [&](const std::string& name, const GradCheckResult& r) {
        if (r.max_rel_error > worst) {
            worst = r.max_rel_error;
            worst_name = name;
        }
        return r.max_rel_error < 1e-3;
    };

    bool ok = true;
    // primitives
    ok &= track("linear", grad_check([](const std::vector<Tensor>& in) {
        return sum_all(linear(in[0], in[1], in[2]));
    }, {rand_t({3, 4}), rand_t({4, 5}), rand_t({5})}));
    ok &= track("matmul", grad_check([](const std::vector<Tensor>& in) {
        return mean_all(matmul(in[0], in[1]));
    }, {rand_t({3, 4}), rand_t({4, 2})}));
    ok &= track("bmm", grad_check([](const std::vector<Tensor>& in) {
        return mean_all(bmm(in[0], in[1]));
    }, {rand_t({2, 3, 4}), rand_t({2, 4, 5})}));
    ok &= track("bmm_nt", grad_check([](const std::vector<Tensor>& in) {
        return mean_all(bmm_nt(in[0], in[1]));
    }, {rand_t({2, 3, 4}), rand_t({2, 5, 4})}));
    ok &= track("bmm_tn", grad_check([](const std::vector<Tensor>& in) {
        return mean_all(bmm_tn(in[0], in[1]));
    }, {rand_t({2, 4, 3}), rand_t({2, 4, 5})}));
    ok &= track("softmax", grad_check([](const std::vector<Tensor>& in) {
        return sum_all(mul(softmax_lastdim(in[0]), in[1]));
    }, {rand_t({3, 6}), rand_t({3, 6})}));
    ok &= track("normalize_sum", grad_check([](const std::vector<Tensor>& in) {
        return sum_all(mul(normalize_sum_lastdim(in[0]), in[1]));
    }, {rand_t({3, 5}, 0.5, 2.0), rand_t({3, 5})}));
    ok &= track("layernorm", grad_check([](const std::vector<Tensor>& in) {
        return sum_all(mul(layernorm(in[0], in[1], in[2]), in[3]));
    }, {rand_t({3, 8}), rand_t({8}, 0.5, 1.5), rand_t({8}), rand_t({3, 8})}));
    ok &= track("groupnorm", grad_check([](const std::vector<Tensor>& in) {
        return sum_all(mul(groupnorm(in[0], 2, in[1], in[2]), in[3]));
    }, {rand_t({2, 4, 3, 3}), rand_t({4}, 0.5, 1.5), rand_t({4}), rand_t({2, 4, 3, 3})}));
    ok &= track("l2_normalize", grad_check([](const std::vector<Tensor>& in) {
        return sum_all(mul(l2_normalize(in[0], 1), in[1]));
    }, {rand_t({2, 5, 3}, 0.2, 1.0), rand_t({2, 5, 3})}));
    ok &= track("gelu", grad_check([](const std::vector<Tensor>& in) {
        return sum_all(mul(gelu(in[0]), in[1]));
    }, {rand_t({12}, -2, 2), rand_t({12})}));
    ok &= track("relu", grad_check([](const std::vector<Tensor>& in) {
        return sum_all(mul(relu(in[0]), in[1]));
    }, {rand_t({12}, 0.1, 2.0), rand_t({12})}));
    ok &= track("abs", grad_check([](const std::vector<Tensor>& in) {
        return sum_all(mul(abs(in[0]), in[1]));
    }, {rand_t({12}, 0.2, 2.0), rand_t({12})}));
    ok &= track("conv2d", grad_check([](const std::vector<Tensor>& in) {
        return sum_all(mul(conv2d(in[0], in[1], in[2], 2, 1), in[3]));
    }, {rand_t({2, 3, 6, 6}), rand_t({4, 3, 3, 3}), rand_t({4}), rand_t({2, 4, 3, 3})}));
    ok &= track("depthwise", grad_check([](const std::vector<Tensor>& in) {
        return sum_all(mul(depthwise_conv2d(in[0], in[1], in[2], 1), in[3]));
    }, {rand_t({2, 3, 5, 5}), rand_t({3, 3, 3}), rand_t({3}), rand_t({2, 3, 5, 5})}));
    ok &= track("maxpool", grad_check([](const std::vector<Tensor>& in) {
        return sum_all(mul(maxpool2d(in[0], 2, 2), in[1]));
    }, {rand_t({2, 3, 6, 6}), rand_t({2, 3, 3, 3})}));
    ok &= track("extract_patches", grad_check([](const std::vector<Tensor>& in) {
        return sum_all(mul(extract_patches(in[0], 2), in[1]));
    }, {rand_t({2, 3, 4, 4}), rand_t({2, 4, 12})}));
    ok &= track("mean_axis", grad_check([](const std::vector<Tensor>& in) {
        return sum_all(mul(mean_axis(in[0], 1), in[1]));
    }, {rand_t({3, 4, 5}), rand_t({3, 5})}));
    ok &= track("heads", grad_check([](const std::vector<Tensor>& in) {
        return sum_all(mul(merge_heads(split_heads(in[0], 2)), in[1]));
    }, {rand_t({2, 3, 8}), rand_t({2, 3, 8})}));
    ok &= track("mul_head_scale", grad_check([](const std::vector<Tensor>& in) {
        return sum_all(mul(mul_head_scale(in[0], in[1]), in[2]));
    }, {rand_t({2, 3, 4}), rand_t({3}, 0.5, 1.5), rand_t({2, 3, 4})}));

    // one toy end-to-end model per family
    const std::vector<models::Family> families = {
        models::Family::cnn,      models::Family::resnet,   models::Family::vit,
        models::Family::deepvit,  models::Family::xcit,     models::Family::crossvit,
        models::Family::parallelvit, models::Family::transcrowd_t,
    };
    for (models::Family family : families) {
        models::BackboneConfig c;
        c.family = family;
        c.name = std::string("toy-") + models::family_name(family);
        c.input_size = 32;
        c.patch_size = 16;
        c.depth = 1;
        c.heads = 2;
        c.dim = 16;
        c.mlp_dim = 32;
        c.head_type = models::HeadType::token;
        switch (family) {
            case models::Family::cnn:
                c.channels = {6};
                c.depth = 1;
                c.head_type = models::HeadType::fc;
                break;
            case models::Family::resnet:
                c.stage_blocks = {1, 1, 1, 1};
                c.head_type = models::HeadType::fc;
                break;
            case models::Family::crossvit:
                c.dim2 = 24;
                c.mlp_dim2 = 48;
                c.patch_size2 = 32;
                break;
            case models::Family::xcit:
                c.cls_attn_layers = 1;
                break;
            case models::Family::parallelvit:
                c.depth = 2;  // one parallel pair
                break;
            default:
                break;
        }
        models::CountingModel model = models::build_backbone(c, 11);
        std::vector<nn::Tensor> inputs;
        std::vector<std::string> names;
        inputs.push_back(rand_t({1, 3, 32, 32}, 0.0, 1.0));
        names.push_back("input");
        for (auto& p : model.params) {
            inputs.push_back(p.tensor);
            names.push_back(p.name);
        }
        auto fn = [&model](const std::vector<nn::Tensor>& in) {
            return mean_all(model.forward(in[0]));
        };
        // sampled coordinates keep the finite-difference pass tractable
        auto result = grad_check(fn, inputs, names, 1e-3, 12, 5);
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%s %.2e; ", models::family_name(family),
                      result.max_rel_error);
        detail += buf;
        if (!track(std::string("e2e-") + models::family_name(family), result)) ok = false;
    }

    char buf[128];
    std::snprintf(buf, sizeof(buf), "| worst %.3e (%s)", worst, worst_name.c_str());
    detail += buf;
    return ok;
}

// ---- 7. attention invariants ----

bool criterion_attention(std::string& detail) {
    using namespace nn;
    Rng rng(123);
    auto rand_t = [&](Shape shape, double lo = -1.0, double hi = 1.0) {
        std::vector<float> v(shape_numel(shape));
        for (float& x : v) x = static_cast<float>(rng.uniform(lo, hi));
        return Tensor::from_data(std::move(shape), std::move(v));
    };

    int checked = 0;
    double worst_row_err = 0.0;
    bool shape_ok = true, identity_ok = true;

    auto check_rows = [&](const Tensor& att) {
        const int cols = att.dim(att.rank() - 1);
        const auto& data = att.data();
        for (size_t r = 0; r < data.size() / cols; ++r) {
            double sum = 0;
            for (int j = 0; j < cols; ++j) sum += data[r * cols + j];
            worst_row_err = std::max(worst_row_err, std::fabs(sum - 1.0));
        }
    };

    for (int i = 0; i < 1000; ++i) {
        const int heads = static_cast<int>(rng.uniform_int(1, 4));
        const int dh = static_cast<int>(rng.uniform_int(2, 8));
        const int dim = heads * dh;
        const int n = static_cast<int>(rng.uniform_int(1, 10));

        models::MhsaParams mp = models::make_mhsa_params(dim, heads, dh, rng);
        auto out = models::mhsa(rand_t({1, n, dim}, -2, 2), mp);
        check_rows(out.attention);

        // re-attention: random positive mixing preserves stochasticity, and
        // identity mixing reproduces the raw maps
        std::vector<float> theta_v(static_cast<size_t>(heads) * heads);
        for (float& v : theta_v) v = static_cast<float>(rng.uniform(0.05, 1.0));
        Tensor mixed = models::re_attention(out.attention,
                                            Tensor::from_data({heads, heads}, std::move(theta_v)));
        check_rows(mixed);
        std::vector<float> eye(static_cast<size_t>(heads) * heads, 0.f);
        for (int h = 0; h < heads; ++h) eye[static_cast<size_t>(h) * heads + h] = 1.f;
        Tensor id_mixed =
            models::re_attention(out.attention, Tensor::from_data({heads, heads}, std::move(eye)));
        for (size_t k = 0; k < id_mixed.numel(); ++k)
            if (std::fabs(id_mixed.data()[k] - out.attention.data()[k]) > 1e-6)
                identity_ok = false;

        // xca: attention is (dh, dh) for any token count
        models::XcaParams xp = models::make_xca_params(dim, heads, dh, rng);
        auto xout = models::xca(rand_t({1, n, dim}, -2, 2), xp);
        if (xout.attention.shape() != Shape{1, heads, dh, dh}) shape_ok = false;
        auto xout2 = models::xca(rand_t({1, 2 * n, dim}, -2, 2), xp);
        if (xout2.attention.shape() != Shape{1, heads, dh, dh}) shape_ok = false;
        check_rows(xout.attention);
        ++checked;
    }

    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d invocations, worst row-sum error %.2e", 3 * checked,
                  worst_row_err);
    detail += buf;
    return checked == 1000 && worst_row_err < 1e-6 && shape_ok && identity_ok;
}

// ---- 8. protocol conformance ----

bool criterion_protocol(std::string& detail) {
    train::TrainConfig c;
    bool ok = true;

    // warm-up hits the base rate exactly at step 5000
    if (std::fabs(train::warmup_lr(c, 5000) - 1e-4) > 1e-12) ok = false;
    if (std::fabs(train::warmup_lr(c, 0) - 1e-6) > 1e-12) ok = false;

    // five flat epochs trigger exactly one factor application
    train::PlateauScheduler plateau(c);
    plateau.observe(1.0);
    int fired_at = -1;
    for (int epoch = 2; epoch <= 7; ++epoch)
        if (plateau.observe(1.0) && fired_at < 0) fired_at = epoch;
    if (fired_at != 6) ok = false;  // epochs 2..6 are the 5-epoch window
    if (std::fabs(plateau.scale() - 0.5) > 1e-12) ok = false;

    // twenty flat epochs trigger the stop
    train::EarlyStopper stopper(c);
    int stopped_at = -1;
    for (int epoch = 1; epoch <= 400; ++epoch) {
        const double loss = epoch <= 3 ? 10.0 - epoch : 7.5;
        if (stopper.observe(loss)) {
            stopped_at = epoch;
            break;
        }
    }
    if (stopped_at != 23) ok = false;  // best at epoch 3, stop at 3+20

    // the 400-epoch cap holds under monotone improvement
    train::EarlyStopper cap(c);
    int cap_at = -1;
    double v = 1000.0;
    for (int epoch = 1; epoch <= 2000; ++epoch) {
        v *= 0.999;
        if (cap.observe(v)) {
            cap_at = epoch;
            break;
        }
    }
    if (cap_at != 400) ok = false;

    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "warmup(5000)=1e-4, plateau fired at epoch %d, stop at %d, cap at %d", fired_at,
                  stopped_at, cap_at);
    detail += buf;
    return ok;
}

// ---- 9. end-to-end toy training ----

bool criterion_toy_training(std::string& detail) {
    const auto dir = work_dir() / "toy-train";
    std::filesystem::remove_all(dir);
    synth::GenerateOptions opt;
    opt.n_images = 1000;
    opt.scene.width = 64;
    opt.scene.height = 64;
    opt.scene.seed = 0;
    opt.scene.ranges.sigma = {2.0, 4.0};
    opt.counts = {0, 10};
    opt.output_dir = dir;
    Manifest manifest = synth::generate_dataset(opt);

    // 80/20 split, seed 0
    Manifest train_m, val_m;
    train_m.root = val_m.root = manifest.root;
    for (size_t i = 0; i < manifest.records.size(); ++i)
        (i < 800 ? train_m : val_m).records.push_back(manifest.records[i]);

    auto stats = adapt::compute_dataset_stats(train_m);
    adapt::validate(stats);
    auto train_set = train::load_dataset(train_m, stats, 64);
    auto val_set = train::load_dataset(val_m, stats, 64);

    models::BackboneConfig mc;
    mc.family = models::Family::vit;
    mc.name = "vit-toy";
    mc.input_size = 64;
    mc.patch_size = 16;
    mc.depth = 2;
    mc.heads = 4;
    mc.dim = 32;
    mc.mlp_dim = 128;
    mc.head_type = models::HeadType::token;

    train::TrainConfig tc;
    tc.seed = 0;
    tc.base_lr = 1e-3;
    tc.warmup_steps = 250;
    tc.batch_size = 16;
    tc.max_epochs = 40;
    tc.early_stop_patience = 20;

    auto run = [&]() {
        models::CountingModel model = models::build_backbone(mc, tc.seed);
        return train::train(model, train_set, val_set, tc);
    };
    train::TrainReport first = run();
    train::TrainReport second = run();

    // constant-mean predictor baseline on the held-out split
    double mean_count = 0;
    for (const auto& s : train_set.samples) mean_count += s.count;
    mean_count /= static_cast<double>(train_set.samples.size());
    double baseline = 0;
    for (const auto& s : val_set.samples) baseline += std::fabs(mean_count - s.count);
    baseline /= static_cast<double>(val_set.samples.size());

    double best_mae = 1e30;
    for (const auto& e : first.epochs) best_mae = std::min(best_mae, e.val_mae);

    bool trace_identical = first.epochs.size() == second.epochs.size();
    if (trace_identical)
        for (size_t i = 0; i < first.epochs.size(); ++i)
            if (first.epochs[i].train_loss != second.epochs[i].train_loss ||
                first.epochs[i].val_loss != second.epochs[i].val_loss)
                trace_identical = false;

    char buf[192];
    std::snprintf(buf, sizeof(buf),
                  "held-out MAE %.3f (target < 1.5), baseline %.3f, epochs %zu, trace %s",
                  best_mae, baseline, first.epochs.size(),
                  trace_identical ? "bit-identical" : "MISMATCH");
    detail += buf;
    return best_mae < 1.5 && best_mae < baseline && trace_identical;
}

// ---- 10. metric oracle equivalence ----

bool criterion_metrics(std::string& detail) {
    Rng rng(2024);
    int failures = 0;
    double worst = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const int n = static_cast<int>(rng.uniform_int(1, 40));
        std::vector<double> p(n), t(n);
        for (int i = 0; i < n; ++i) {
            p[i] = rng.uniform(-2000, 2000);
            t[i] = rng.uniform(-2000, 2000);
        }
        // brute-force recomputation in a different accumulation order
        std::vector<double> abs_err(n), sq_err(n);
        for (int i = 0; i < n; ++i) {
            abs_err[i] = std::fabs(p[i] - t[i]);
            sq_err[i] = (p[i] - t[i]) * (p[i] - t[i]);
        }
        std::sort(abs_err.rbegin(), abs_err.rend());
        std::sort(sq_err.rbegin(), sq_err.rend());
        double mae_ref = 0, mse_ref = 0;
        for (int i = 0; i < n; ++i) {
            mae_ref += abs_err[i];
            mse_ref += sq_err[i];
        }
        mae_ref /= n;
        const double rmse_ref = std::sqrt(mse_ref / n);

        const double m = eval::mae(p, t);
        const double r = eval::rmse(p, t);
        worst = std::max({worst, std::fabs(m - mae_ref), std::fabs(r - rmse_ref)});
        if (std::fabs(m - mae_ref) > 1e-9 || std::fabs(r - rmse_ref) > 1e-9) ++failures;
        if (r < m - 1e-12) ++failures;
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "10000 vectors, worst deviation %.2e, %d failures", worst,
                  failures);
    detail += buf;
    return failures == 0;
}

}  // namespace

int main() {
    std::vector<Criterion> criteria = {
        {"1. parameter-count reproduction (Table 1, within 5%)", criterion_parameters},
        {"2. FLOPs ordering (Table 3 rank order; ViT within 2x)", criterion_flops},
        {"3. generator exactness and determinism (200 images @512)", criterion_generator_exact},
        {"4. generator statistics (2000 images, mean within 5% of 927.5)",
         criterion_generator_stats},
        {"5. adapter correctness (blobs, overlapping discs, point labels)", criterion_adapters},
        {"6. gradient correctness (primitives + one toy model per family)", criterion_gradients},
        {"7. attention invariants (1000 invocations each)", criterion_attention},
        {"8. protocol conformance (warm-up, plateau, early stop, cap)", criterion_protocol},
        {"9. end-to-end toy training (ViT d2/dim32, MAE < 1.5, bit-identical)",
         criterion_toy_training},
        {"10. metric oracle equivalence (1e-9 on 10000 vectors)", criterion_metrics},
    };

    int failed = 0;
    for (auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail += std::string("exception: ") + e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] %s (%.1fs)\n    %s\n", ok ? "PASS" : "FAIL", c.name.c_str(), secs,
                    detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failed;
    }
    if (failed) {
        std::printf("%d of %zu criteria FAILED\n", failed, criteria.size());
        return 1;
    }
    std::printf("all %zu criteria passed\n", criteria.size());
    return 0;
}
