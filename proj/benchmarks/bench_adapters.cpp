#include <benchmark/benchmark.h>

#include "microcount/adapters.hpp"
#include "microcount/rng.hpp"

using namespace microcount;

namespace {

GrayU8 disc_mask(int size, int discs, Rng& rng) {
    GrayU8 mask(size, size);
    for (int i = 0; i < discs; ++i) {
        const double cx = rng.uniform(10, size - 10);
        const double cy = rng.uniform(10, size - 10);
        const double r = rng.uniform(4, 9);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double dx = x - cx, dy = y - cy;
                if (dx * dx + dy * dy <= r * r) mask.at(x, y) = 1;
            }
    }
    return mask;
}

}  // namespace

static void BM_DistanceTransform(benchmark::State& state) {
    Rng rng(1);
    GrayU8 mask = disc_mask(static_cast<int>(state.range(0)), 40, rng);
    for (auto _ : state) {
        auto dt = adapt::squared_distance_transform(mask);
        benchmark::DoNotOptimize(dt.data());
    }
}
BENCHMARK(BM_DistanceTransform)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

static void BM_CountFromMask(benchmark::State& state) {
    Rng rng(2);
    GrayU8 mask = disc_mask(384, static_cast<int>(state.range(0)), rng);
    for (auto _ : state) benchmark::DoNotOptimize(adapt::count_from_mask(mask));
}
BENCHMARK(BM_CountFromMask)->Arg(20)->Arg(80)->Unit(benchmark::kMillisecond);

static void BM_Preprocess(benchmark::State& state) {
    ImageU8 img(1600, 1200);
    Rng rng(3);
    for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.uniform_int(0, 255));
    adapt::NormalizationStats stats;
    stats.mean = {0.3, 0.3, 0.3};
    stats.stddev = {0.25, 0.25, 0.25};
    for (auto _ : state) {
        auto chw = adapt::preprocess(img, stats, 384);
        benchmark::DoNotOptimize(chw.data());
    }
}
BENCHMARK(BM_Preprocess)->Unit(benchmark::kMillisecond);
