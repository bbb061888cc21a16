#include <benchmark/benchmark.h>

#include "microcount/synthgen.hpp"

using namespace microcount;
using namespace microcount::synth;

static void BM_RenderBacterium(benchmark::State& state) {
    Canvas canvas(512, 512);
    BacteriumSpec spec;
    spec.center = {256, 256};
    spec.sigma_major = static_cast<double>(state.range(0));
    spec.sigma_minor = spec.sigma_major / 2;
    spec.rotation = 0.7;
    spec.peak_intensity = {0.8, 0.2, 0.1};
    for (auto _ : state) {
        render_bacterium(canvas, spec);
        benchmark::DoNotOptimize(canvas.values.data());
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_RenderBacterium)->Arg(2)->Arg(4)->Arg(6);

static void BM_ComposeScene(benchmark::State& state) {
    SceneConfig config;
    config.width = 512;
    config.height = 512;
    config.target_count = static_cast<int>(state.range(0));
    config.seed = 1;
    for (auto _ : state) {
        AnnotatedImage img = compose_scene(config);
        benchmark::DoNotOptimize(img.pixels.pixels.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ComposeScene)->Arg(50)->Arg(300)->Unit(benchmark::kMillisecond);
