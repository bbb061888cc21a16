#include <benchmark/benchmark.h>

#include "microcount/flops.hpp"
#include "microcount/models.hpp"

using namespace microcount;
using namespace microcount::models;

namespace {

nn::Tensor random_batch(int b, int s, Rng& rng) {
    std::vector<float> v(static_cast<size_t>(b) * 3 * s * s);
    for (float& x : v) x = static_cast<float>(rng.uniform(0, 1));
    return nn::Tensor::from_data({b, 3, s, s}, std::move(v));
}

BackboneConfig toy(Family family) {
    BackboneConfig c;
    c.family = family;
    c.name = "bench-toy";
    c.input_size = 64;
    c.patch_size = 16;
    c.depth = 2;
    c.heads = 4;
    c.dim = 64;
    c.mlp_dim = 128;
    c.head_type = HeadType::token;
    if (family == Family::cnn) {
        c.channels = {16, 32};
        c.head_type = HeadType::fc;
    }
    if (family == Family::resnet) {
        c.stage_blocks = {1, 1, 1, 1};
        c.head_type = HeadType::fc;
    }
    if (family == Family::xcit) c.cls_attn_layers = 1;
    if (family == Family::crossvit) {
        c.dim2 = 96;
        c.mlp_dim2 = 192;
        c.patch_size2 = 32;
    }
    return c;
}

void forward_bench(benchmark::State& state, Family family) {
    CountingModel model = build_backbone(toy(family), 0);
    Rng rng(7);
    nn::Tensor batch = random_batch(4, 64, rng);
    nn::NoGradGuard guard;
    for (auto _ : state) {
        nn::Tensor out = model.forward(batch);
        benchmark::DoNotOptimize(out.data().data());
    }
    state.SetItemsProcessed(state.iterations() * 4);
}

}  // namespace

static void BM_ForwardVit(benchmark::State& state) { forward_bench(state, Family::vit); }
static void BM_ForwardXcit(benchmark::State& state) { forward_bench(state, Family::xcit); }
static void BM_ForwardCrossvit(benchmark::State& state) { forward_bench(state, Family::crossvit); }
static void BM_ForwardResnet(benchmark::State& state) { forward_bench(state, Family::resnet); }
static void BM_ForwardCnn(benchmark::State& state) { forward_bench(state, Family::cnn); }
BENCHMARK(BM_ForwardVit)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardXcit)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardCrossvit)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardResnet)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardCnn)->Unit(benchmark::kMillisecond);

static void BM_BuildPreset(benchmark::State& state) {
    const auto& names = preset_names();
    const std::string name = names[static_cast<size_t>(state.range(0))];
    state.SetLabel(name);
    for (auto _ : state) {
        CountingModel model = build_backbone(preset(name), 0);
        benchmark::DoNotOptimize(model.params.data());
    }
}
BENCHMARK(BM_BuildPreset)->Arg(0)->Arg(3)->Arg(7)->Unit(benchmark::kMillisecond);

static void BM_EstimateFlops(benchmark::State& state) {
    for (auto _ : state)
        for (const auto& name : preset_names())
            benchmark::DoNotOptimize(estimate_flops(preset(name)));
}
BENCHMARK(BM_EstimateFlops);
