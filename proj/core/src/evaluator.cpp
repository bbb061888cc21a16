#include "microcount/evaluator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "microcount/errors.hpp"
#include "microcount/pngio.hpp"

namespace microcount::eval {

double mae(const std::vector<double>& predictions, const std::vector<double>& truths) {
    if (predictions.empty() || predictions.size() != truths.size())
        throw InputError("mae: inputs must be non-empty and equal length");
    double acc = 0.0;
    for (size_t i = 0; i < predictions.size(); ++i) acc += std::fabs(predictions[i] - truths[i]);
    return acc / static_cast<double>(predictions.size());
}

double rmse(const std::vector<double>& predictions, const std::vector<double>& truths) {
    if (predictions.empty() || predictions.size() != truths.size())
        throw InputError("rmse: inputs must be non-empty and equal length");
    double acc = 0.0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        const double d = predictions[i] - truths[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(predictions.size()));
}

EvalMetrics evaluate(const models::CountingModel& model, const Manifest& manifest,
                     const adapt::NormalizationStats& stats, int batch_size) {
    if (manifest.records.empty()) throw InputError("evaluate: empty manifest");
    if (batch_size < 1) throw ConfigError("evaluate: batch_size must be >= 1");
    nn::NoGradGuard guard;

    EvalMetrics out;
    const int S = model.config.input_size;
    std::vector<float> batch_data;
    std::vector<double> batch_truths;
    double forward_seconds = 0.0;

    auto flush = [&]() {
        if (batch_truths.empty()) return;
        const int B = static_cast<int>(batch_truths.size());
        nn::Tensor batch = nn::Tensor::from_data({B, 3, S, S}, std::move(batch_data));
        const auto t0 = std::chrono::steady_clock::now();
        nn::Tensor pred = model.forward(batch);
        forward_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        for (int i = 0; i < B; ++i) {
            out.predictions.push_back(static_cast<double>(pred.data()[i]));
            out.truths.push_back(batch_truths[i]);
        }
        batch_data.clear();
        batch_truths.clear();
    };

    for (size_t r = 0; r < manifest.records.size(); ++r) {
        std::vector<float> chw;
        try {
            chw = adapt::preprocess(read_png(manifest.resolve(manifest.records[r])), stats, S);
        } catch (const std::exception&) {
            out.skipped.push_back(r);
            continue;
        }
        batch_data.insert(batch_data.end(), chw.begin(), chw.end());
        batch_truths.push_back(static_cast<double>(manifest.records[r].count));
        if (batch_truths.size() == static_cast<size_t>(batch_size)) flush();
    }
    flush();

    if (out.predictions.empty())
        throw InputError("evaluate: every record failed to load (" +
                         std::to_string(out.skipped.size()) + " skipped)");
    out.evaluated = out.predictions.size();
    out.mae = mae(out.predictions, out.truths);
    out.rmse = rmse(out.predictions, out.truths);
    std::vector<double> rounded(out.predictions.size());
    for (size_t i = 0; i < rounded.size(); ++i) rounded[i] = std::round(out.predictions[i]);
    out.mae_rounded = mae(rounded, out.truths);
    out.ms_per_image = 1000.0 * forward_seconds / static_cast<double>(out.evaluated);
    return out;
}

namespace {

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void write_csv(const std::filesystem::path& path, const EvalReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write report CSV: " + path.string());
    out << "model,variant,dataset,mae,rmse,flops,params,ms_per_image,seed,mae_rounded\n";
    for (const auto& r : report.rows) {
        out << csv_escape(r.model) << ',' << csv_escape(r.variant) << ',' << csv_escape(r.dataset)
            << ',' << fmt_double(r.mae) << ',' << fmt_double(r.rmse) << ',' << fmt_double(r.flops)
            << ',' << r.params << ',' << fmt_double(r.ms_per_image) << ',' << r.seed << ','
            << fmt_double(r.mae_rounded) << '\n';
    }
    if (!out) throw IoError("failed while writing report CSV: " + path.string());
}

EvalReport read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open report CSV: " + path.string());
    EvalReport report;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        auto f = split_csv_line(line);
        if (f.size() != 10) throw InputError("malformed report CSV row: " + line);
        EvalRow r;
        r.model = f[0];
        r.variant = f[1];
        r.dataset = f[2];
        r.mae = std::stod(f[3]);
        r.rmse = std::stod(f[4]);
        r.flops = std::stod(f[5]);
        r.params = std::stoll(f[6]);
        r.ms_per_image = std::stod(f[7]);
        r.seed = std::stoull(f[8]);
        r.mae_rounded = std::stod(f[9]);
        report.rows.push_back(std::move(r));
    }
    return report;
}

namespace {

// Architecture blocks in the comparison table.
int block_of(const std::string& model) {
    if (model == "cnn" || model == "resnet") return 0;       // traditional
    if (model.rfind("transcrowd", 0) == 0) return 1;         // state of the art
    return 2;                                                // ViT backbones
}

struct PivotRow {
    std::string model, variant;
    int block;
    double flops = 0.0;
    long long params = 0;
    std::map<std::string, std::pair<double, double>> by_dataset;  // mae, rmse
};

}  // namespace

std::string render_table(const EvalReport& report) {
    // Average duplicate (variant, dataset) rows across seeds.
    struct Key {
        std::string variant, dataset;
        bool operator<(const Key& o) const {
            return variant != o.variant ? variant < o.variant : dataset < o.dataset;
        }
    };
    std::map<Key, std::pair<EvalRow, int>> grouped;
    std::vector<std::string> variant_order, dataset_order;
    for (const auto& r : report.rows) {
        Key k{r.variant, r.dataset};
        auto it = grouped.find(k);
        if (it == grouped.end()) {
            grouped.emplace(k, std::make_pair(r, 1));
            if (std::find(variant_order.begin(), variant_order.end(), r.variant) ==
                variant_order.end())
                variant_order.push_back(r.variant);
            if (std::find(dataset_order.begin(), dataset_order.end(), r.dataset) ==
                dataset_order.end())
                dataset_order.push_back(r.dataset);
        } else {
            it->second.first.mae += r.mae;
            it->second.first.rmse += r.rmse;
            it->second.second += 1;
        }
    }

    std::vector<PivotRow> rows;
    for (const auto& variant : variant_order) {
        PivotRow pr;
        pr.variant = variant;
        for (const auto& [key, value] : grouped) {
            if (key.variant != variant) continue;
            const EvalRow& r = value.first;
            pr.model = r.model;
            pr.block = block_of(r.model);
            pr.flops = r.flops;
            pr.params = r.params;
            pr.by_dataset[key.dataset] = {r.mae / value.second, r.rmse / value.second};
        }
        rows.push_back(std::move(pr));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const PivotRow& a, const PivotRow& b) { return a.block < b.block; });

    // best / second-best per (dataset, metric) column, earlier row wins ties
    struct Marks {
        int best = -1, second = -1;
    };
    auto column_marks = [&](const std::string& dataset, bool use_rmse) {
        Marks m;
        double best_v = 0, second_v = 0;
        for (size_t i = 0; i < rows.size(); ++i) {
            auto it = rows[i].by_dataset.find(dataset);
            if (it == rows[i].by_dataset.end()) continue;
            const double v = use_rmse ? it->second.second : it->second.first;
            if (m.best < 0 || v < best_v) {
                m.second = m.best;
                second_v = best_v;
                m.best = static_cast<int>(i);
                best_v = v;
            } else if (m.second < 0 || v < second_v) {
                m.second = static_cast<int>(i);
                second_v = v;
            }
        }
        return m;
    };
    std::map<std::string, std::pair<Marks, Marks>> marks;
    for (const auto& d : dataset_order) marks[d] = {column_marks(d, false), column_marks(d, true)};

    std::ostringstream os;
    os << "| Architecture |";
    for (const auto& d : dataset_order) os << ' ' << d << " MAE | " << d << " RMSE |";
    os << " FLOPs (e8) | Params (e6) |\n";
    os << "|---|";
    for (size_t i = 0; i < dataset_order.size(); ++i) os << "---|---|";
    os << "---|---|\n";

    auto fmt_metric = [](double v, bool best, bool second) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.3f", v);
        std::string s = buf;
        if (best) return "**" + s + "**";
        if (second) return "_" + s + "_";
        return s;
    };

    int prev_block = rows.empty() ? 0 : rows[0].block;
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].block != prev_block) {
            os << "|---|";
            for (size_t d = 0; d < dataset_order.size(); ++d) os << "---|---|";
            os << "---|---|\n";
            prev_block = rows[i].block;
        }
        os << "| " << rows[i].variant << " |";
        for (const auto& d : dataset_order) {
            auto it = rows[i].by_dataset.find(d);
            if (it == rows[i].by_dataset.end()) {
                os << " - | - |";
                continue;
            }
            const auto& [m_marks, r_marks] = marks[d];
            os << ' '
               << fmt_metric(it->second.first, m_marks.best == static_cast<int>(i),
                             m_marks.second == static_cast<int>(i))
               << " | "
               << fmt_metric(it->second.second, r_marks.best == static_cast<int>(i),
                             r_marks.second == static_cast<int>(i))
               << " |";
        }
        char buf[64];
        std::snprintf(buf, sizeof(buf), " %.2f | %.2f |", rows[i].flops / 1e8,
                      static_cast<double>(rows[i].params) / 1e6);
        os << buf << '\n';
    }
    return os.str();
}

}  // namespace microcount::eval
