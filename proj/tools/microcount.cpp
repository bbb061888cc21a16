// microcount: synthetic-data generation, dataset adaptation, training, and
// benchmark reporting for weakly-supervised microorganism counting.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "microcount/adapters.hpp"
#include "microcount/errors.hpp"
#include "microcount/evaluator.hpp"
#include "microcount/flops.hpp"
#include "microcount/manifest.hpp"
#include "microcount/models.hpp"
#include "microcount/pngio.hpp"
#include "microcount/synthgen.hpp"
#include "microcount/tensor.hpp"
#include "microcount/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace microcount;

namespace {

fs::path data_root() {
    if (const char* env = std::getenv("MICROCOUNT_DATA_ROOT")) return fs::path(env);
    return fs::current_path();
}

fs::path resolve_data_path(const fs::path& p) {
    if (p.is_absolute()) return p;
    return data_root() / p;
}

// Unknown keys are rejected so a typo cannot silently fall back to a default.
void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& context) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw ConfigError("unknown key '" + key + "' in " + context + " config");
    }
}

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    json j;
    in >> j;
    return j;
}

fs::path make_run_dir(const std::string& explicit_out, const std::string& subcommand,
                      uint64_t seed) {
    if (!explicit_out.empty()) {
        fs::create_directories(explicit_out);
        return explicit_out;
    }
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", std::gmtime(&t));
    fs::path dir = fs::path("runs") / (subcommand + "-" + stamp + "-seed" + std::to_string(seed));
    fs::create_directories(dir);
    return dir;
}

void write_resolved_config(const fs::path& dir, const json& resolved) {
    std::ofstream out(dir / "resolved_config.json");
    out << resolved.dump(2) << '\n';
}

// ---- generate ----

struct GenerateArgs {
    std::string config_path, out;
    int n = -1;
    int width = -1, height = -1;
    int64_t seed = -1;
    bool dry_run = false;
};

int cmd_generate(const GenerateArgs& args) {
    json cfg = load_config(args.config_path);
    check_keys(cfg,
               {"n_images", "width", "height", "seed", "output_dir", "count_min", "count_max",
                "sigma_min", "sigma_max", "intensity_dominant_min", "intensity_dominant_max",
                "intensity_other_min", "intensity_other_max", "background_dir",
                "background_base_min", "background_base_max", "background_noise_amplitude",
                "background_noise_cells"},
               "generate");

    synth::GenerateOptions opt;
    opt.n_images = cfg.value("n_images", 100);
    opt.scene.width = cfg.value("width", 3280);
    opt.scene.height = cfg.value("height", 2464);
    opt.scene.seed = cfg.value("seed", uint64_t(0));
    opt.counts.lo = cfg.value("count_min", 0);
    opt.counts.hi = cfg.value("count_max", 1855);
    opt.scene.ranges.sigma = {cfg.value("sigma_min", 1.5), cfg.value("sigma_max", 6.0)};
    opt.scene.ranges.intensity_dominant = {cfg.value("intensity_dominant_min", 0.5),
                                           cfg.value("intensity_dominant_max", 1.0)};
    opt.scene.ranges.intensity_other = {cfg.value("intensity_other_min", 0.0),
                                        cfg.value("intensity_other_max", 0.3)};
    if (cfg.contains("background_dir"))
        opt.scene.background.directory = resolve_data_path(cfg["background_dir"].get<std::string>());
    opt.scene.background.base_min = cfg.value("background_base_min", 5.0);
    opt.scene.background.base_max = cfg.value("background_base_max", 20.0);
    opt.scene.background.noise_amplitude = cfg.value("background_noise_amplitude", 10.0);
    opt.scene.background.noise_cells = cfg.value("background_noise_cells", 8);

    // flags override config keys
    if (args.n >= 0) opt.n_images = args.n;
    if (args.width > 0) opt.scene.width = args.width;
    if (args.height > 0) opt.scene.height = args.height;
    if (args.seed >= 0) opt.scene.seed = static_cast<uint64_t>(args.seed);
    std::string out_dir = args.out;
    if (out_dir.empty() && cfg.contains("output_dir")) out_dir = cfg["output_dir"].get<std::string>();

    synth::validate(opt.scene);
    json resolved = {{"n_images", opt.n_images},
                     {"width", opt.scene.width},
                     {"height", opt.scene.height},
                     {"seed", opt.scene.seed},
                     {"count_min", opt.counts.lo},
                     {"count_max", opt.counts.hi},
                     {"sigma_min", opt.scene.ranges.sigma.min},
                     {"sigma_max", opt.scene.ranges.sigma.max},
                     {"intensity_dominant_min", opt.scene.ranges.intensity_dominant.min},
                     {"intensity_dominant_max", opt.scene.ranges.intensity_dominant.max},
                     {"intensity_other_min", opt.scene.ranges.intensity_other.min},
                     {"intensity_other_max", opt.scene.ranges.intensity_other.max},
                     {"background_dir", opt.scene.background.directory.string()},
                     {"background_base_min", opt.scene.background.base_min},
                     {"background_base_max", opt.scene.background.base_max},
                     {"background_noise_amplitude", opt.scene.background.noise_amplitude},
                     {"background_noise_cells", opt.scene.background.noise_cells}};
    if (args.dry_run) {
        std::cout << resolved.dump(2) << '\n';
        return 0;
    }

    fs::path run_dir = make_run_dir(out_dir, "generate", opt.scene.seed);
    opt.output_dir = run_dir;
    write_resolved_config(run_dir, resolved);
    Manifest manifest = synth::generate_dataset(opt);
    const CountStats stats = manifest.count_stats();
    std::cout << "manifest: " << (run_dir / "manifest.jsonl").string() << '\n';
    std::cout << "images: " << stats.records << "  counts min/ave/max: " << stats.min << " / "
              << stats.mean << " / " << stats.max << "  total: " << stats.total << '\n';
    return 0;
}

// ---- adapt ----

struct AdaptArgs {
    std::string dataset, source, out, patch_grid;
    bool augment = false;
    double min_marker_sep = 5.0;
};

int cmd_adapt(const AdaptArgs& args) {
    adapt::AdaptOptions opt;
    opt.augment = args.augment;
    opt.watershed.min_marker_separation = args.min_marker_sep;
    if (!args.patch_grid.empty()) {
        const auto x = args.patch_grid.find('x');
        if (x == std::string::npos) throw ConfigError("--patch-grid expects ROWSxCOLS, e.g. 2x2");
        opt.patch_grid = {std::stoi(args.patch_grid.substr(0, x)),
                          std::stoi(args.patch_grid.substr(x + 1))};
    }
    const fs::path source = resolve_data_path(args.source);
    fs::path out_dir = make_run_dir(args.out, "adapt-" + args.dataset, 0);

    Manifest manifest;
    if (args.dataset == "fnc")
        manifest = adapt::adapt_fnc(source, out_dir, opt);
    else if (args.dataset == "vgg")
        manifest = adapt::adapt_vgg(source, out_dir, opt);
    else if (args.dataset == "cancer")
        manifest = adapt::adapt_cancer(source, out_dir, opt);
    else if (args.dataset == "synthetic")
        manifest = adapt::adapt_synthetic(source, out_dir, opt);
    else
        throw ConfigError("unknown dataset '" + args.dataset +
                          "' (expected fnc | vgg | cancer | synthetic)");

    const CountStats stats = manifest.count_stats();
    std::cout << "manifest: " << (out_dir / "manifest.jsonl").string() << '\n';
    std::cout << "records: " << stats.records << "  counts min/ave/max: " << stats.min << " / "
              << stats.mean << " / " << stats.max << "  total: " << stats.total << '\n';
    return 0;
}

// ---- stats ----

int cmd_stats(const std::string& manifest_path, bool with_norm) {
    Manifest manifest = read_manifest(resolve_data_path(manifest_path));
    const CountStats stats = manifest.count_stats();
    std::cout << "records: " << stats.records << '\n'
              << "count total: " << stats.total << '\n'
              << "count min/ave/max: " << stats.min << " / " << stats.mean << " / " << stats.max
              << '\n';
    if (with_norm) {
        auto norm = adapt::compute_dataset_stats(manifest);
        std::cout << "channel mean: " << norm.mean[0] << ' ' << norm.mean[1] << ' ' << norm.mean[2]
                  << '\n'
                  << "channel std:  " << norm.stddev[0] << ' ' << norm.stddev[1] << ' '
                  << norm.stddev[2] << '\n';
    }
    return 0;
}

// ---- train ----

struct TrainArgs {
    std::string preset, manifest, val_manifest, out, config_path;
    double val_fraction = -1;
    int input_size = -1;
    int epochs = -1;
    int batch_size = -1;
    int64_t seed = -1;
    std::string loss;
};

train::TrainConfig train_config_from(const json& cfg) {
    check_keys(cfg,
               {"base_lr", "warmup_steps", "warmup_start_fraction", "plateau_patience",
                "plateau_factor", "improvement_rel", "early_stop_patience", "max_epochs",
                "batch_size", "seed", "loss", "input_size", "val_fraction"},
               "train");
    train::TrainConfig tc;
    tc.base_lr = cfg.value("base_lr", 1e-4);
    tc.warmup_steps = cfg.value("warmup_steps", 5000);
    tc.warmup_start_fraction = cfg.value("warmup_start_fraction", 0.01);
    tc.plateau_patience = cfg.value("plateau_patience", 5);
    tc.plateau_factor = cfg.value("plateau_factor", 0.5);
    tc.improvement_rel = cfg.value("improvement_rel", 1e-4);
    tc.early_stop_patience = cfg.value("early_stop_patience", 20);
    tc.max_epochs = cfg.value("max_epochs", 400);
    tc.batch_size = cfg.value("batch_size", 0);
    tc.seed = cfg.value("seed", uint64_t(0));
    const std::string loss = cfg.value("loss", "l1");
    if (loss == "l1")
        tc.loss = train::LossKind::l1;
    else if (loss == "mse")
        tc.loss = train::LossKind::mse;
    else
        throw ConfigError("loss must be 'l1' or 'mse'");
    return tc;
}

// Deterministic shuffled split when no explicit validation manifest is given.
std::pair<Manifest, Manifest> split_manifest(const Manifest& all, double val_fraction,
                                             uint64_t seed) {
    std::vector<size_t> idx(all.records.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(derive_seed(seed, 0x73706C6974ULL));
    for (size_t i = idx.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
        std::swap(idx[i - 1], idx[j]);
    }
    const size_t n_val =
        std::max<size_t>(1, static_cast<size_t>(static_cast<double>(idx.size()) * val_fraction));
    if (n_val >= idx.size()) throw ConfigError("val_fraction leaves no training records");
    Manifest tr, va;
    tr.root = va.root = all.root;
    for (size_t i = 0; i < idx.size(); ++i)
        (i < idx.size() - n_val ? tr : va).records.push_back(all.records[idx[i]]);
    return {tr, va};
}

int cmd_train(const TrainArgs& args) {
    json cfg = load_config(args.config_path);
    train::TrainConfig tc = train_config_from(cfg);
    int input_size = cfg.value("input_size", 384);
    double val_fraction = cfg.value("val_fraction", 0.2);
    if (args.input_size > 0) input_size = args.input_size;
    if (args.epochs > 0) tc.max_epochs = args.epochs;
    if (args.batch_size > 0) tc.batch_size = args.batch_size;
    if (args.seed >= 0) tc.seed = static_cast<uint64_t>(args.seed);
    if (args.val_fraction > 0) val_fraction = args.val_fraction;
    if (!args.loss.empty())
        tc.loss = args.loss == "mse" ? train::LossKind::mse : train::LossKind::l1;

    models::BackboneConfig mc = models::preset(args.preset);
    mc.input_size = input_size;
    models::validate(mc);

    Manifest train_manifest, val_manifest;
    if (!args.val_manifest.empty()) {
        train_manifest = read_manifest(resolve_data_path(args.manifest));
        val_manifest = read_manifest(resolve_data_path(args.val_manifest));
    } else {
        Manifest all = read_manifest(resolve_data_path(args.manifest));
        std::tie(train_manifest, val_manifest) = split_manifest(all, val_fraction, tc.seed);
    }

    fs::path run_dir = make_run_dir(args.out, "train-" + args.preset, tc.seed);
    tc.checkpoint_path = run_dir / "best.ckpt";

    json resolved = {{"preset", args.preset},
                     {"input_size", input_size},
                     {"base_lr", tc.base_lr},
                     {"warmup_steps", tc.warmup_steps},
                     {"warmup_start_fraction", tc.warmup_start_fraction},
                     {"plateau_patience", tc.plateau_patience},
                     {"plateau_factor", tc.plateau_factor},
                     {"improvement_rel", tc.improvement_rel},
                     {"early_stop_patience", tc.early_stop_patience},
                     {"max_epochs", tc.max_epochs},
                     {"batch_size", tc.batch_size},
                     {"seed", tc.seed},
                     {"loss", tc.loss == train::LossKind::l1 ? "l1" : "mse"},
                     {"val_fraction", val_fraction},
                     {"train_records", train_manifest.records.size()},
                     {"val_records", val_manifest.records.size()}};
    write_resolved_config(run_dir, resolved);

    auto stats = adapt::compute_dataset_stats(train_manifest);
    adapt::validate(stats);
    auto train_set = train::load_dataset(train_manifest, stats, input_size);
    auto val_set = train::load_dataset(val_manifest, stats, input_size);

    models::CountingModel model = models::build_backbone(mc, tc.seed);
    train::TrainReport report = train::train(model, train_set, val_set, tc);
    report.write_json(run_dir / "train_report.json");
    report.write_csv(run_dir / "loss_curve.csv");
    {
        json norm = {{"mean", stats.mean}, {"stddev", stats.stddev}};
        std::ofstream out(run_dir / "normalization.json");
        out << norm.dump(2) << '\n';
    }

    std::cout << "stop: " << report.stop_reason << "  epochs: " << report.epochs.size()
              << "  best epoch: " << report.best_epoch
              << "  best val loss: " << report.best_val_loss << '\n';
    std::cout << "report: " << (run_dir / "train_report.json").string() << '\n';
    if (report.stop_reason == "diverged") {
        std::cerr << "training diverged (non-finite loss)\n";
        return 1;
    }
    return 0;
}

// ---- eval ----

struct EvalArgs {
    std::string preset, checkpoint, manifest, out, dataset_name;
    int batch_size = 8;
    int input_size = -1;
    int64_t seed = -1;
};

int cmd_eval(const EvalArgs& args) {
    models::BackboneConfig mc = models::preset(args.preset);
    if (args.input_size > 0) mc.input_size = args.input_size;
    const uint64_t seed = args.seed >= 0 ? static_cast<uint64_t>(args.seed) : 0;

    models::CountingModel model = models::build_backbone(mc, seed);
    nn::restore_checkpoint(resolve_data_path(args.checkpoint), model.params);

    Manifest manifest = read_manifest(resolve_data_path(args.manifest));
    auto stats = adapt::compute_dataset_stats(manifest);
    adapt::validate(stats);
    eval::EvalMetrics metrics = eval::evaluate(model, manifest, stats, args.batch_size);

    fs::path run_dir = make_run_dir(args.out, "eval-" + args.preset, seed);
    write_resolved_config(run_dir, {{"preset", args.preset},
                                    {"checkpoint", args.checkpoint},
                                    {"manifest", args.manifest},
                                    {"batch_size", args.batch_size},
                                    {"input_size", mc.input_size},
                                    {"seed", seed}});
    eval::EvalReport report;
    eval::EvalRow row;
    row.model = models::family_name(mc.family);
    row.variant = args.preset;
    row.dataset = args.dataset_name.empty() ? manifest.root.filename().string() : args.dataset_name;
    row.mae = metrics.mae;
    row.rmse = metrics.rmse;
    row.flops = models::estimate_flops(mc);
    row.params = models::count_parameters(model);
    row.ms_per_image = metrics.ms_per_image;
    row.seed = seed;
    row.mae_rounded = metrics.mae_rounded;
    report.rows.push_back(row);
    eval::write_csv(run_dir / "eval.csv", report);

    std::cout << "mae: " << metrics.mae << "  rmse: " << metrics.rmse
              << "  ms/image: " << metrics.ms_per_image << "  evaluated: " << metrics.evaluated
              << "  skipped: " << metrics.skipped.size() << '\n';
    std::cout << "report: " << (run_dir / "eval.csv").string() << '\n';
    return 0;
}

// ---- bench ----

struct BenchArgs {
    std::string presets = "all";
    std::string manifest, out, dataset_name;
    bool flops_only = false;
    int batch_size = 4;
    int input_size = -1;
    int64_t seed = -1;
};

int cmd_bench(const BenchArgs& args) {
    std::vector<std::string> names;
    if (args.presets == "all") {
        names = models::preset_names();
    } else {
        std::string cur;
        for (char c : args.presets + ",") {
            if (c == ',') {
                if (!cur.empty()) names.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
    }
    const uint64_t seed = args.seed >= 0 ? static_cast<uint64_t>(args.seed) : 0;

    std::optional<Manifest> manifest;
    adapt::NormalizationStats stats;
    std::string dataset = args.dataset_name;
    if (!args.flops_only) {
        if (args.manifest.empty())
            throw ConfigError("bench requires --manifest unless --flops-only is set");
        manifest = read_manifest(resolve_data_path(args.manifest));
        stats = adapt::compute_dataset_stats(*manifest);
        adapt::validate(stats);
        if (dataset.empty()) dataset = manifest->root.filename().string();
    } else if (dataset.empty()) {
        dataset = "-";
    }

    eval::EvalReport report;
    for (const auto& name : names) {
        models::BackboneConfig mc = models::preset(name);
        if (args.input_size > 0) mc.input_size = args.input_size;
        models::CountingModel model = models::build_backbone(mc, seed);

        eval::EvalRow row;
        row.model = models::family_name(mc.family);
        row.variant = name;
        row.dataset = dataset;
        row.flops = models::estimate_flops(mc);
        row.params = models::count_parameters(model);
        row.seed = seed;
        if (!args.flops_only) {
            eval::EvalMetrics metrics = eval::evaluate(model, *manifest, stats, args.batch_size);
            row.mae = metrics.mae;
            row.rmse = metrics.rmse;
            row.ms_per_image = metrics.ms_per_image;
            row.mae_rounded = metrics.mae_rounded;
        }
        report.rows.push_back(row);
        std::cerr << name << ": params " << row.params << ", flops " << row.flops << '\n';
    }

    fs::path run_dir = make_run_dir(args.out, "bench", seed);
    write_resolved_config(run_dir, {{"presets", args.presets},
                                    {"manifest", args.manifest},
                                    {"flops_only", args.flops_only},
                                    {"batch_size", args.batch_size},
                                    {"seed", seed}});
    eval::write_csv(run_dir / "bench.csv", report);
    const std::string table = eval::render_table(report);
    {
        std::ofstream out(run_dir / "bench.md");
        out << table;
    }
    std::cout << table;
    std::cout << "report: " << (run_dir / "bench.csv").string() << '\n';
    return 0;
}

// ---- flops ----

int cmd_flops(const std::string& preset_name, int input_size) {
    models::BackboneConfig mc = models::preset(preset_name);
    if (input_size > 0) mc.input_size = input_size;
    models::CountingModel model = models::build_backbone(mc, 0);
    const double flops = models::estimate_flops(mc);
    std::cout << "preset: " << preset_name << '\n'
              << "params: " << models::count_parameters(model) << '\n'
              << "flops: " << flops << " (" << flops / 1e8 << "e8)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"weakly-supervised microorganism counting toolkit"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate", "generate a synthetic bacteria dataset");
    generate->add_option("--config", gen.config_path, "JSON config file");
    generate->add_option("--out", gen.out, "output directory (default: stamped under ./runs)");
    generate->add_option("-n,--n-images", gen.n, "number of images");
    generate->add_option("--width", gen.width, "image width");
    generate->add_option("--height", gen.height, "image height");
    generate->add_option("--seed", gen.seed, "master seed");
    generate->add_flag("--dry-run", gen.dry_run, "print the resolved config and write nothing");

    AdaptArgs adapt_args;
    auto* adapt_cmd = app.add_subcommand("adapt", "adapt a public dataset to count labels");
    adapt_cmd->add_option("--dataset", adapt_args.dataset, "fnc | vgg | cancer | synthetic")
        ->required();
    adapt_cmd->add_option("--source", adapt_args.source, "dataset root in its native layout")
        ->required();
    adapt_cmd->add_option("--out", adapt_args.out, "output directory");
    adapt_cmd->add_option("--patch-grid", adapt_args.patch_grid, "ROWSxCOLS patching grid");
    adapt_cmd->add_flag("--augment", adapt_args.augment, "emit the six dihedral variants");
    adapt_cmd->add_option("--min-marker-sep", adapt_args.min_marker_sep,
                          "watershed marker separation in pixels");

    std::string stats_manifest;
    bool stats_norm = false;
    auto* stats_cmd = app.add_subcommand("stats", "print manifest count statistics");
    stats_cmd->add_option("--manifest", stats_manifest, "manifest.jsonl path")->required();
    stats_cmd->add_flag("--with-norm", stats_norm, "also compute per-channel mean/std");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train a preset on a manifest");
    train_cmd->add_option("--preset", train_args.preset, "model preset name")->required();
    train_cmd->add_option("--manifest", train_args.manifest, "training manifest")->required();
    train_cmd->add_option("--val-manifest", train_args.val_manifest,
                          "validation manifest (default: split from --manifest)");
    train_cmd->add_option("--val-fraction", train_args.val_fraction, "validation split fraction");
    train_cmd->add_option("--config", train_args.config_path, "JSON training config");
    train_cmd->add_option("--out", train_args.out, "output directory");
    train_cmd->add_option("--input-size", train_args.input_size, "model input side length");
    train_cmd->add_option("--epochs", train_args.epochs, "maximum epochs");
    train_cmd->add_option("--batch-size", train_args.batch_size, "mini-batch size");
    train_cmd->add_option("--seed", train_args.seed, "training seed");
    train_cmd->add_option("--loss", train_args.loss, "l1 | mse");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
    eval_cmd->add_option("--preset", eval_args.preset, "model preset name")->required();
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--manifest", eval_args.manifest, "evaluation manifest")->required();
    eval_cmd->add_option("--out", eval_args.out, "output directory");
    eval_cmd->add_option("--batch-size", eval_args.batch_size, "inference batch size");
    eval_cmd->add_option("--input-size", eval_args.input_size, "model input side length");
    eval_cmd->add_option("--seed", eval_args.seed, "seed recorded in the report");
    eval_cmd->add_option("--dataset-name", eval_args.dataset_name, "dataset label for the report");

    BenchArgs bench_args;
    auto* bench_cmd = app.add_subcommand("bench", "compare presets in the paper's table layout");
    bench_cmd->add_option("--presets", bench_args.presets, "'all' or comma-separated preset names");
    bench_cmd->add_option("--manifest", bench_args.manifest, "evaluation manifest");
    bench_cmd->add_flag("--flops-only", bench_args.flops_only,
                        "skip inference; report parameters and FLOPs only");
    bench_cmd->add_option("--batch-size", bench_args.batch_size, "inference batch size");
    bench_cmd->add_option("--input-size", bench_args.input_size, "model input side length");
    bench_cmd->add_option("--seed", bench_args.seed, "build/report seed");
    bench_cmd->add_option("--out", bench_args.out, "output directory");
    bench_cmd->add_option("--dataset-name", bench_args.dataset_name,
                          "dataset label for the report");

    std::string flops_preset;
    int flops_input = -1;
    auto* flops_cmd = app.add_subcommand("flops", "parameter count and FLOPs estimate");
    flops_cmd->add_option("--preset", flops_preset, "model preset name")->required();
    flops_cmd->add_option("--input-size", flops_input, "model input side length");

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) return cmd_generate(gen);
        if (adapt_cmd->parsed()) return cmd_adapt(adapt_args);
        if (stats_cmd->parsed()) return cmd_stats(stats_manifest, stats_norm);
        if (train_cmd->parsed()) return cmd_train(train_args);
        if (eval_cmd->parsed()) return cmd_eval(eval_args);
        if (bench_cmd->parsed()) return cmd_bench(bench_args);
        if (flops_cmd->parsed()) return cmd_flops(flops_preset, flops_input);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
