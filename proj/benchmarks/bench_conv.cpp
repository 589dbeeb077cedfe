#include <benchmark/benchmark.h>

#include "lcnet/nn_ops.hpp"
#include "lcnet/random.hpp"

namespace {

using namespace lcnet;

Tensor<float> filled(const Shape& shape, Rng& rng) {
  std::vector<float> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& e : v) e = static_cast<float>(rng.normal(0.0, 1.0));
  return Tensor<float>(shape, v);
}

// args: batch, channels, spatial size
void BM_Conv3x3(benchmark::State& state) {
  Rng rng(1);
  const auto n = state.range(0), c = state.range(1), hw = state.range(2);
  const auto x = filled({n, c, hw, hw}, rng);
  Conv2dParams<float> p;
  p.weight = filled({c, c, 3, 3}, rng);
  p.padding = 1;
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, p));
  state.counters["MAC/s"] = benchmark::Counter(static_cast<double>(n * c * c * 9 * hw * hw) * static_cast<double>(state.iterations()),
                                               benchmark::Counter::kIsRate);
}
BENCHMARK(BM_Conv3x3)->Args({32, 16, 32})->Args({32, 32, 16})->Args({32, 64, 8})->Unit(benchmark::kMillisecond);

void BM_Conv3x3Backward(benchmark::State& state) {
  Rng rng(2);
  const auto n = state.range(0), c = state.range(1), hw = state.range(2);
  auto x = filled({n, c, hw, hw}, rng);
  x.set_requires_grad(true);
  Conv2dParams<float> p;
  p.weight = filled({c, c, 3, 3}, rng);
  p.weight.set_requires_grad(true);
  p.padding = 1;
  for (auto _ : state) {
    x.zero_grad();
    p.weight.zero_grad();
    sum(conv2d(x, p)).backward();
  }
}
BENCHMARK(BM_Conv3x3Backward)->Args({32, 16, 32})->Args({32, 64, 8})->Unit(benchmark::kMillisecond);

}  // namespace
