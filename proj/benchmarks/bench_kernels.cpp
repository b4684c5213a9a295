#include <benchmark/benchmark.h>

#include <random>

#include "xview/geometry.hpp"
#include "xview/ops.hpp"

using namespace xview;

namespace {

Tensor noise(Shape shape, std::uint64_t seed, float scale = 1.0f) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, scale);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = d(rng);
  return t;
}

// Args: channels, spatial size.
void BM_Conv2dForward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), s = static_cast<int>(state.range(1));
  const Var x = Var::leaf(noise({1, c, s, 4 * s}, 1));
  const Var w = Var::leaf(noise({c, c, 3, 3}, 2, 0.05f));
  const Var b = Var::leaf(Tensor({c}));
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, b, 1, 1).value().storage().data());
  state.SetItemsProcessed(state.iterations() * 2LL * c * c * 9 * s * 4 * s);
}
BENCHMARK(BM_Conv2dForward)->Args({32, 32})->Args({64, 32})->Unit(benchmark::kMillisecond);

void BM_Conv2dBackward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), s = static_cast<int>(state.range(1));
  const Tensor xt = noise({1, c, s, 4 * s}, 1);
  const Tensor wt = noise({c, c, 3, 3}, 2, 0.05f);
  for (auto _ : state) {
    const Var x = Var::leaf(xt, true), w = Var::leaf(wt, true);
    backward(ops::mean(ops::conv2d(x, w, Var(), 1, 1)));
    benchmark::DoNotOptimize(w.grad().storage().data());
  }
}
BENCHMARK(BM_Conv2dBackward)->Args({32, 32})->Unit(benchmark::kMillisecond);

void BM_DeformableConvForward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), s = static_cast<int>(state.range(1));
  const Var x = Var::leaf(noise({1, c, s, 4 * s}, 3));
  const Var off = Var::leaf(noise({1, 18, s, 4 * s}, 4, 0.5f));
  const Var w = Var::leaf(noise({c, c, 3, 3}, 5, 0.05f));
  const Var b = Var::leaf(Tensor({c}));
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(deformable_conv(x, off, w, b).value().storage().data());
}
BENCHMARK(BM_DeformableConvForward)->Args({32, 32})->Args({64, 32})->Unit(benchmark::kMillisecond);

void BM_DeformableConvBackward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), s = static_cast<int>(state.range(1));
  const Tensor xt = noise({1, c, s, 4 * s}, 3), ot = noise({1, 18, s, 4 * s}, 4, 0.5f);
  const Tensor wt = noise({c, c, 3, 3}, 5, 0.05f);
  for (auto _ : state) {
    const Var x = Var::leaf(xt, true), off = Var::leaf(ot, true), w = Var::leaf(wt, true);
    backward(ops::mean(deformable_conv(x, off, w, Var())));
    benchmark::DoNotOptimize(off.grad().storage().data());
  }
}
BENCHMARK(BM_DeformableConvBackward)->Args({32, 32})->Unit(benchmark::kMillisecond);

// Polar resampling of a C x S x S feature map to C x S/2 x 2S.
void BM_BilinearSamplePolar(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), s = static_cast<int>(state.range(1));
  const Var f = Var::leaf(noise({1, c, s, s}, 6));
  const PolarGrid grid = build_polar_grid(s, s / 2, 2 * s);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(bilinear_sample(f, grid).value().storage().data());
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(c) * s * s);
}
BENCHMARK(BM_BilinearSamplePolar)->Args({3, 256})->Args({256, 64})->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
