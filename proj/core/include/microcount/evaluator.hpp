#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "microcount/adapters.hpp"
#include "microcount/manifest.hpp"
#include "microcount/models.hpp"

namespace microcount::eval {

double mae(const std::vector<double>& predictions, const std::vector<double>& truths);
double rmse(const std::vector<double>& predictions, const std::vector<double>& truths);

struct EvalMetrics {
    double mae = 0.0;
    double rmse = 0.0;
    double mae_rounded = 0.0;  // predictions rounded to whole counts
    double ms_per_image = 0.0;
    size_t evaluated = 0;
    std::vector<size_t> skipped;  // record indices that failed to load
    std::vector<double> predictions;
    std::vector<double> truths;
};

// Runs inference over every record. Unreadable images land on the skip
// list; the call fails only if nothing was evaluated. Results do not depend
// on the batch size.
EvalMetrics evaluate(const models::CountingModel& model, const Manifest& manifest,
                     const adapt::NormalizationStats& stats, int batch_size);

struct EvalRow {
    std::string model;    // family
    std::string variant;  // preset name
    std::string dataset;
    double mae = 0.0;
    double rmse = 0.0;
    double flops = 0.0;
    long long params = 0;
    double ms_per_image = 0.0;
    uint64_t seed = 0;
    double mae_rounded = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
};

// CSV schema: model,variant,dataset,mae,rmse,flops,params,ms_per_image,
// seed,mae_rounded. Floats print at full precision so parsing restores
// them exactly.
void write_csv(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_csv(const std::filesystem::path& path);

// Markdown table grouped into the three architecture blocks (traditional /
// state-of-the-art / ViT backbones), one MAE+RMSE column pair per dataset,
// best per column in bold and second best underlined (ties broken toward
// the earlier row). Rows sharing (variant, dataset) across seeds are
// averaged.
std::string render_table(const EvalReport& report);

}  // namespace microcount::eval
