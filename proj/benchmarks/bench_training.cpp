#include <benchmark/benchmark.h>

#include "lcnet/dataset.hpp"
#include "lcnet/network.hpp"
#include "lcnet/optimizer.hpp"

namespace {

using namespace lcnet;

ArchitectureSpec backbone(std::int64_t blocks) {
  ArchitectureSpec a;
  a.stem_width = 16;
  a.blocks_per_stage = {blocks, blocks, blocks};
  a.widths = {16, 32, 64};
  return a;
}

// One SGD step on a batch of 32x32 images. args: blocks per stage, batch size
void BM_TrainStep(benchmark::State& state) {
  auto net = build_network<float>(backbone(state.range(0)), 1);
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto data = make_synthetic(10, n, 2);
  const Tensor<float> x({static_cast<std::int64_t>(n), 3, 32, 32}, data.images);
  SgdNesterov<float> opt(parameters(net), 0.9, 5e-4);
  TrainConfig cfg;
  for (auto _ : state) {
    auto fwd = network_forward(x, net, ForwardMode::train(cfg.leak));
    auto loss = total_loss<float>(fwd.logits, data.labels, fwd.saliences, 1e-4f);
    opt.zero_grad();
    loss.backward();
    opt.step(lr_at_epoch(cfg, 0));
  }
  state.counters["images/s"] = benchmark::Counter(static_cast<double>(n) * static_cast<double>(state.iterations()),
                                                  benchmark::Counter::kIsRate);
}
BENCHMARK(BM_TrainStep)->Args({1, 96})->Args({2, 96})->Unit(benchmark::kMillisecond);

}  // namespace
