#include <cmath>
#include <fstream>

#include "doctest.h"
#include "microcount/errors.hpp"
#include "microcount/evaluator.hpp"
#include "microcount/flops.hpp"
#include "microcount/pngio.hpp"
#include "microcount/synthgen.hpp"
#include "test_util.hpp"

using namespace microcount;
using namespace microcount::eval;

TEST_CASE("mae and rmse known values") {
    std::vector<double> same = {1, 2, 3};
    CHECK(mae(same, same) == doctest::Approx(0.0));
    CHECK(rmse(same, same) == doctest::Approx(0.0));

    std::vector<double> pred = {2, 2, 5}, truth = {1, 2, 3};
    CHECK(mae(pred, truth) == doctest::Approx(1.0));
    CHECK(rmse(pred, truth) == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(rmse(pred, truth) == doctest::Approx(1.29099).epsilon(1e-5));

    // permutation invariance over pairs
    std::vector<double> pred_p = {5, 2, 2}, truth_p = {3, 2, 1};
    CHECK(mae(pred_p, truth_p) == doctest::Approx(mae(pred, truth)));

    CHECK_THROWS_AS(mae({}, {}), InputError);
    CHECK_THROWS_AS(rmse({1.0}, {1.0, 2.0}), InputError);
}

TEST_CASE("rmse dominates mae and both match a brute-force recomputation") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = static_cast<int>(rng.uniform_int(1, 60));
        std::vector<double> p(n), t(n);
        for (int i = 0; i < n; ++i) {
            p[i] = rng.uniform(-100, 100);
            t[i] = rng.uniform(-100, 100);
        }
        // independent accumulation order: sort the absolute errors first
        std::vector<double> abs_err(n), sq_err(n);
        for (int i = 0; i < n; ++i) {
            abs_err[i] = std::fabs(p[i] - t[i]);
            sq_err[i] = (p[i] - t[i]) * (p[i] - t[i]);
        }
        std::sort(abs_err.begin(), abs_err.end());
        std::sort(sq_err.begin(), sq_err.end());
        double mae_ref = 0, mse_ref = 0;
        for (int i = 0; i < n; ++i) {
            mae_ref += abs_err[i];
            mse_ref += sq_err[i];
        }
        mae_ref /= n;
        const double rmse_ref = std::sqrt(mse_ref / n);
        CHECK(std::fabs(mae(p, t) - mae_ref) < 1e-9);
        CHECK(std::fabs(rmse(p, t) - rmse_ref) < 1e-9);
        CHECK(rmse(p, t) >= mae(p, t) - 1e-12);
    }
}

namespace {

// Dataset of constant-gray images whose pixel value encodes the count, so a
// closed-form model can predict labels exactly.
struct GrayFixture {
    testutil::TempDir tmp{"evalfix"};
    Manifest manifest;
    adapt::NormalizationStats stats;  // identity: raw [0,1] values

    explicit GrayFixture(std::vector<int> counts) {
        manifest.root = tmp.path;
        for (size_t i = 0; i < counts.size(); ++i) {
            const std::string name = "img" + std::to_string(i) + ".png";
            write_png(tmp.path / name,
                      ImageU8(16, 16, static_cast<uint8_t>(counts[i])));
            DatasetRecord rec;
            rec.image = name;
            rec.count = counts[i];
            manifest.records.push_back(rec);
        }
    }
};

models::CountingModel gray_oracle_model(double scale) {
    models::CountingModel m;
    m.config.family = models::Family::cnn;
    m.config.name = "oracle";
    m.config.input_size = 16;
    m.forward = [scale](const nn::Tensor& batch) {
        const int B = batch.dim(0);
        const size_t per = batch.numel() / static_cast<size_t>(B);
        std::vector<float> out(static_cast<size_t>(B), 0.f);
        for (int b = 0; b < B; ++b) {
            double acc = 0;
            for (size_t i = 0; i < per; ++i) acc += batch.data()[b * per + i];
            out[b] = static_cast<float>(scale * acc / static_cast<double>(per));
        }
        return nn::Tensor::from_data({B}, std::move(out));
    };
    return m;
}

}  // namespace

TEST_CASE("evaluate with an exact oracle model gives zero error") {
    GrayFixture fix({3, 17, 42, 0, 200});
    models::CountingModel oracle = gray_oracle_model(255.0);
    EvalMetrics metrics = evaluate(oracle, fix.manifest, fix.stats, 2);
    CHECK(metrics.evaluated == 5);
    CHECK(metrics.mae < 1e-4);
    CHECK(metrics.rmse < 1e-4);
    CHECK(metrics.mae_rounded == doctest::Approx(0.0));
}

TEST_CASE("constant-zero model scores the mean count") {
    GrayFixture fix({2, 4, 6});
    models::CountingModel zero = gray_oracle_model(0.0);
    EvalMetrics metrics = evaluate(zero, fix.manifest, fix.stats, 8);
    CHECK(metrics.mae == doctest::Approx(4.0));
}

TEST_CASE("evaluation is batch-size invariant") {
    GrayFixture fix({1, 5, 9, 13, 60, 90, 120});
    models::BackboneConfig mc;
    mc.family = models::Family::vit;
    mc.name = "tiny";
    mc.input_size = 16;
    mc.patch_size = 16;
    mc.depth = 1;
    mc.heads = 2;
    mc.dim = 16;
    mc.mlp_dim = 32;
    models::CountingModel model = models::build_backbone(mc, 5);

    EvalMetrics m1 = evaluate(model, fix.manifest, fix.stats, 1);
    EvalMetrics m3 = evaluate(model, fix.manifest, fix.stats, 3);
    EvalMetrics m100 = evaluate(model, fix.manifest, fix.stats, 100);
    REQUIRE(m1.predictions.size() == m3.predictions.size());
    for (size_t i = 0; i < m1.predictions.size(); ++i) {
        CHECK(m1.predictions[i] == m3.predictions[i]);  // bitwise
        CHECK(m1.predictions[i] == m100.predictions[i]);
    }
}

TEST_CASE("unreadable images land on the skip list") {
    GrayFixture fix({3, 7});
    std::ofstream(fix.tmp.path / "broken.png") << "not a png";
    DatasetRecord bad;
    bad.image = "broken.png";
    bad.count = 1;
    fix.manifest.records.push_back(bad);

    models::CountingModel oracle = gray_oracle_model(255.0);
    EvalMetrics metrics = evaluate(oracle, fix.manifest, fix.stats, 2);
    CHECK(metrics.evaluated == 2);
    REQUIRE(metrics.skipped.size() == 1);
    CHECK(metrics.skipped[0] == 2);

    Manifest all_bad;
    all_bad.root = fix.tmp.path;
    all_bad.records = {bad};
    CHECK_THROWS_AS(evaluate(oracle, all_bad, fix.stats, 2), InputError);
}

TEST_CASE("csv report round-trips exactly") {
    testutil::TempDir tmp("csv");
    EvalReport report;
    EvalRow row;
    row.model = "vit";
    row.variant = "vit-vanilla";
    row.dataset = "synthetic, small";  // comma forces quoting
    row.mae = 1.234567890123456789;
    row.rmse = 2.3456789;
    row.flops = 1.30679e10;
    row.params = 87501313;
    row.ms_per_image = 17.25;
    row.seed = 42;
    row.mae_rounded = 1.0;
    report.rows.push_back(row);
    EvalRow second = row;
    second.variant = "resnet50";
    second.model = "resnet";
    second.mae = 0.5;
    report.rows.push_back(second);

    write_csv(tmp.path / "r.csv", report);
    EvalReport parsed = read_csv(tmp.path / "r.csv");
    REQUIRE(parsed.rows.size() == 2);
    for (size_t i = 0; i < 2; ++i) {
        CHECK(parsed.rows[i].model == report.rows[i].model);
        CHECK(parsed.rows[i].variant == report.rows[i].variant);
        CHECK(parsed.rows[i].dataset == report.rows[i].dataset);
        CHECK(parsed.rows[i].mae == report.rows[i].mae);  // exact round trip
        CHECK(parsed.rows[i].rmse == report.rows[i].rmse);
        CHECK(parsed.rows[i].flops == report.rows[i].flops);
        CHECK(parsed.rows[i].params == report.rows[i].params);
        CHECK(parsed.rows[i].ms_per_image == report.rows[i].ms_per_image);
        CHECK(parsed.rows[i].seed == report.rows[i].seed);
        CHECK(parsed.rows[i].mae_rounded == report.rows[i].mae_rounded);
    }
}

TEST_CASE("table rendering marks best and second best") {
    EvalReport report;
    auto add = [&](const std::string& model, const std::string& variant, double mae_v,
                   double rmse_v) {
        EvalRow r;
        r.model = model;
        r.variant = variant;
        r.dataset = "synthetic";
        r.mae = mae_v;
        r.rmse = rmse_v;
        report.rows.push_back(r);
    };
    add("cnn", "cnn-base", 2.0, 3.0);
    add("resnet", "resnet50", 1.0, 1.5);
    add("vit", "vit-vanilla", 1.5, 2.0);

    std::string table = render_table(report);
    CHECK(table.find("**1.000**") != std::string::npos);   // best mae bold
    CHECK(table.find("_1.500_") != std::string::npos);     // second underlined
    CHECK(table.find("cnn-base") != std::string::npos);

    // a single model is trivially the best
    EvalReport solo;
    add("cnn", "cnn-base", 2.0, 3.0);
    solo.rows = {report.rows[0]};
    std::string solo_table = render_table(solo);
    CHECK(solo_table.find("**2.000**") != std::string::npos);

    // ties break toward the earlier row
    EvalReport tie;
    tie.rows = {report.rows[0], report.rows[0]};
    tie.rows[1].variant = "cnn-medium";
    std::string tie_table = render_table(tie);
    const auto bold_pos = tie_table.find("**2.000**");
    const auto base_pos = tie_table.find("cnn-base");
    CHECK(bold_pos != std::string::npos);
    CHECK(base_pos < bold_pos);

    // multiple seeds aggregate to their mean
    EvalReport seeds;
    EvalRow s1 = report.rows[0];
    s1.seed = 1;
    s1.mae = 2.0;
    EvalRow s2 = s1;
    s2.seed = 2;
    s2.mae = 4.0;
    seeds.rows = {s1, s2};
    std::string seed_table = render_table(seeds);
    CHECK(seed_table.find("3.000") != std::string::npos);
}
