#include <benchmark/benchmark.h>

#include "microcount/rng.hpp"
#include "microcount/tensor.hpp"

using namespace microcount;
using namespace microcount::nn;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
    std::vector<float> v(shape_numel(shape));
    for (float& x : v) x = static_cast<float>(rng.uniform(-1, 1));
    return Tensor::from_data(std::move(shape), std::move(v));
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(1);
    Tensor a = random_tensor({n, n}, rng);
    Tensor b = random_tensor({n, n}, rng);
    NoGradGuard guard;
    for (auto _ : state) {
        Tensor c = matmul(a, b);
        benchmark::DoNotOptimize(c.data().data());
    }
    state.SetItemsProcessed(state.iterations() * int64_t(n) * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256)->Arg(512);

static void BM_SoftmaxRows(benchmark::State& state) {
    Rng rng(2);
    Tensor x = random_tensor({256, 256}, rng);
    NoGradGuard guard;
    for (auto _ : state) {
        Tensor y = softmax_lastdim(x);
        benchmark::DoNotOptimize(y.data().data());
    }
}
BENCHMARK(BM_SoftmaxRows);

static void BM_Conv2d(benchmark::State& state) {
    Rng rng(3);
    Tensor x = random_tensor({1, 32, 64, 64}, rng);
    Tensor w = random_tensor({64, 32, 3, 3}, rng);
    Tensor b = random_tensor({64}, rng);
    NoGradGuard guard;
    for (auto _ : state) {
        Tensor y = conv2d(x, w, b, 1, 1);
        benchmark::DoNotOptimize(y.data().data());
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Conv2d)->Unit(benchmark::kMillisecond);

static void BM_ForwardBackwardMlp(benchmark::State& state) {
    Rng rng(4);
    Tensor x = random_tensor({32, 128}, rng);
    Tensor w1 = Tensor::param_trunc_normal({128, 256}, rng);
    Tensor b1 = Tensor::param_zeros({256});
    Tensor w2 = Tensor::param_trunc_normal({256, 1}, rng);
    Tensor b2 = Tensor::param_zeros({1});
    for (auto _ : state) {
        Tensor loss = mean_all(linear(gelu(linear(x, w1, b1)), w2, b2));
        backward(loss);
        benchmark::DoNotOptimize(w1.grad().data());
        w1.zero_grad();
        b1.zero_grad();
        w2.zero_grad();
        b2.zero_grad();
    }
}
BENCHMARK(BM_ForwardBackwardMlp)->Unit(benchmark::kMicrosecond);
