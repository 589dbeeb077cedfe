#include <benchmark/benchmark.h>

#include "lcnet/dynamic_block.hpp"
#include "lcnet/random.hpp"

namespace {

using namespace lcnet;

// Block gate open, roughly `open` of the channel gates open.
BlockSpec<float> gated_block(double open, Rng& rng) {
  auto b = make_block<float>(BlockKind::basic, 32, 32, 1, rng);
  for (auto* g : {&b.block_gate, &b.channel_gate}) {
    for (auto& v : g->fc.weight.mutable_data()) v = 0.0f;
  }
  b.block_gate.fc.bias.mutable_data()[0] = 0.5f;
  for (auto& v : b.channel_gate.fc.bias.mutable_data()) v = rng.uniform() < open ? 0.5f : -0.5f;
  return b;
}

Tensor<float> input(Rng& rng) {
  std::vector<float> v(32 * 32 * 16 * 16);
  for (auto& e : v) e = static_cast<float>(rng.normal(0.0, 1.0));
  return Tensor<float>({32, 32, 16, 16}, v);
}

// arg: percent of open channels
void BM_BlockDense(benchmark::State& state) {
  Rng rng(3);
  auto b = gated_block(static_cast<double>(state.range(0)) / 100.0, rng);
  const auto x = input(rng);
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(block_forward_dense(x, b, ForwardMode::eval()).output);
}
BENCHMARK(BM_BlockDense)->Arg(100)->Arg(50)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_BlockSkipping(benchmark::State& state) {
  Rng rng(3);
  const auto b = gated_block(static_cast<double>(state.range(0)) / 100.0, rng);
  const auto x = input(rng);
  for (auto _ : state) benchmark::DoNotOptimize(block_forward_skipping(x, b).output);
}
BENCHMARK(BM_BlockSkipping)->Arg(100)->Arg(50)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace
