#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "microcount/manifest.hpp"
#include "microcount/pngio.hpp"
#include "test_util.hpp"

using namespace microcount;

namespace {

struct CliResult {
    int exit_code;
    std::string output;
};

CliResult run_cli(const std::string& args) {
    const std::string out_file =
        (std::filesystem::temp_directory_path() / "microcount-cli-out.txt").string();
    const std::string cmd = std::string(MICROCOUNT_CLI_PATH) + " " + args + " > " + out_file +
                            " 2>&1";
    const int status = std::system(cmd.c_str());
    std::ifstream in(out_file);
    std::stringstream ss;
    ss << in.rdbuf();
    return {WEXITSTATUS(status), ss.str()};
}

}  // namespace

TEST_CASE("cli generate writes images and a manifest") {
    testutil::TempDir tmp("cligen");
    const std::string out = (tmp.path / "ds").string();
    CliResult r = run_cli("generate -n 10 --width 64 --height 64 --seed 5 --out " + out);
    INFO(r.output);
    REQUIRE(r.exit_code == 0);

    int pngs = 0;
    for (const auto& e : std::filesystem::directory_iterator(out))
        if (e.path().extension() == ".png") ++pngs;
    CHECK(pngs == 10);
    CHECK(std::filesystem::exists(tmp.path / "ds" / "manifest.jsonl"));
    CHECK(std::filesystem::exists(tmp.path / "ds" / "resolved_config.json"));

    Manifest m = read_manifest(tmp.path / "ds" / "manifest.jsonl");
    CHECK(m.records.size() == 10);
}

TEST_CASE("cli generate --dry-run writes nothing") {
    testutil::TempDir tmp("clidry");
    const std::string out = (tmp.path / "none").string();
    CliResult r = run_cli("generate -n 3 --width 32 --height 32 --dry-run --out " + out);
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("\"n_images\": 3") != std::string::npos);
    CHECK_FALSE(std::filesystem::exists(tmp.path / "none" / "manifest.jsonl"));
}

TEST_CASE("cli generate fails cleanly on an unwritable output") {
    CliResult r = run_cli("generate -n 1 --width 32 --height 32 --out /proc/no/such/dir");
    CHECK(r.exit_code != 0);
    CHECK(r.output.find("error") != std::string::npos);
}

TEST_CASE("cli generate rejects unknown config keys") {
    testutil::TempDir tmp("clicfg");
    std::ofstream(tmp.path / "bad.json") << R"({"n_imagez": 3})";
    CliResult r = run_cli("generate --config " + (tmp.path / "bad.json").string());
    CHECK(r.exit_code != 0);
    CHECK(r.output.find("unknown key") != std::string::npos);
}

TEST_CASE("cli adapt vgg fixture") {
    testutil::TempDir tmp("cliadapt");
    ImageU8 img(24, 24, 40);
    write_png(tmp.path / "001cell.png", img);
    write_png(tmp.path / "002cell.png", img);
    ImageU8 dots1(24, 24, 0), dots2(24, 24, 0);
    dots1.at(2, 2, 0) = 255;
    dots1.at(8, 8, 0) = 255;
    dots1.at(20, 5, 0) = 255;
    for (int i = 0; i < 5; ++i) dots2.at(3 * i + 1, 7, 1) = 255;
    write_png(tmp.path / "001dots.png", dots1);
    write_png(tmp.path / "002dots.png", dots2);

    const std::string out = (tmp.path / "out").string();
    CliResult r = run_cli("adapt --dataset vgg --source " + tmp.path.string() + " --out " + out);
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    Manifest m = read_manifest(tmp.path / "out" / "manifest.jsonl");
    REQUIRE(m.records.size() == 2);
    CHECK(m.records[0].count == 3);
    CHECK(m.records[1].count == 5);
}

TEST_CASE("cli adapt rejects unknown layouts with guidance") {
    testutil::TempDir tmp("clibadadapt");
    CliResult r = run_cli("adapt --dataset fnc --source " + tmp.path.string() + " --out " +
                          (tmp.path / "out").string());
    CHECK(r.exit_code != 0);
    CHECK(r.output.find("expected") != std::string::npos);
}

TEST_CASE("cli flops reports the published parameter scale") {
    CliResult r = run_cli("flops --preset crossvit-ti");
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    const auto pos = r.output.find("params: ");
    REQUIRE(pos != std::string::npos);
    const long long params = std::stoll(r.output.substr(pos + 8));
    CHECK(std::llabs(params - 3070000) < 3070000 / 20);  // within 5% of 3.07e6

    CliResult bad = run_cli("flops --preset resnet5000");
    CHECK(bad.exit_code != 0);
}

TEST_CASE("cli stats reports manifest statistics") {
    testutil::TempDir tmp("clistats");
    const std::string out = (tmp.path / "ds").string();
    REQUIRE(run_cli("generate -n 6 --width 48 --height 48 --seed 2 --out " + out).exit_code == 0);
    CliResult r = run_cli("stats --manifest " + out + "/manifest.jsonl");
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("records: 6") != std::string::npos);
    CHECK(r.output.find("count min/ave/max") != std::string::npos);
}

TEST_CASE("cli train smoke run writes a report and checkpoint") {
    testutil::TempDir tmp("clitrain");
    const std::string ds = (tmp.path / "ds").string();
    // shrink the count range via a config file; flags handle the rest
    std::ofstream(tmp.path / "gen.json") << R"({"count_max": 8})";
    REQUIRE(run_cli("generate -n 24 --width 32 --height 32 --seed 9 --out " + ds + " --config " +
                    (tmp.path / "gen.json").string())
                .exit_code == 0);

    std::ofstream(tmp.path / "train.json") << R"({
        "max_epochs": 2, "batch_size": 8, "warmup_steps": 4,
        "base_lr": 0.001, "input_size": 32, "val_fraction": 0.25})";
    const std::string run = (tmp.path / "run").string();
    CliResult r = run_cli("train --preset vit-vanilla --manifest " + ds +
                          "/manifest.jsonl --config " + (tmp.path / "train.json").string() +
                          " --out " + run + " --seed 0" + " --input-size 32" + " --epochs 2");
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    CHECK(std::filesystem::exists(tmp.path / "run" / "train_report.json"));
    CHECK(std::filesystem::exists(tmp.path / "run" / "loss_curve.csv"));
    CHECK(std::filesystem::exists(tmp.path / "run" / "best.ckpt"));
    CHECK(std::filesystem::exists(tmp.path / "run" / "resolved_config.json"));

    // eval the checkpoint we just wrote
    CliResult ev = run_cli("eval --preset vit-vanilla --checkpoint " + run +
                           "/best.ckpt --manifest " + ds + "/manifest.jsonl --input-size 32" +
                           " --out " + (tmp.path / "eval").string());
    INFO(ev.output);
    REQUIRE(ev.exit_code == 0);
    CHECK(std::filesystem::exists(tmp.path / "eval" / "eval.csv"));

    CliResult missing = run_cli("eval --preset vit-vanilla --checkpoint /no/such.ckpt --manifest " +
                                ds + "/manifest.jsonl --input-size 32");
    CHECK(missing.exit_code != 0);
}

TEST_CASE("cli bench in flops-only mode covers every preset") {
    testutil::TempDir tmp("clibench");
    CliResult r = run_cli("bench --flops-only --out " + (tmp.path / "b").string());
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    for (const char* name :
         {"cnn-base", "cnn-medium", "cnn-deep", "resnet50", "resnet101", "vit-vanilla",
          "xcit-s24", "crossvit-ti", "parallelvit-ti", "deepvit-s", "transcrowd-g",
          "transcrowd-t"})
        CHECK(r.output.find(name) != std::string::npos);
    CHECK(std::filesystem::exists(tmp.path / "b" / "bench.csv"));
    CHECK(std::filesystem::exists(tmp.path / "b" / "bench.md"));
}
