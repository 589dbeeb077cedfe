#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "lcnet/dataset.hpp"
#include "lcnet/network.hpp"
#include "lcnet/optimizer.hpp"

namespace lcnet {

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;      // mean total loss over training instances
  double accuracy = 0.0;  // training-pass accuracy in [0, 1]
  double mean_block_salience = 0.0;
  double channel_sparsity = 0.0;
  double gate_sparsity = 0.0;
  double backbone_lr = 0.0;
  double gate_lr = 0.0;
  std::optional<double> test_accuracy;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  std::vector<double> step_losses;
  int best_epoch = -1;
  double best_test_accuracy = 0.0;
};

// Called after each epoch; `improved` is true when test accuracy beat every earlier epoch (or,
// without a test set, on every epoch).
using EpochCallback =
    std::function<void(const EpochMetrics&, const NetworkSpec<float>&, bool improved)>;

// Sets every gate to weight 0 / bias 1 and stops it requiring gradients.
void freeze_gates_open(NetworkSpec<float>& net);

// Seed of the generator that drives shuffling and augmentation.
std::uint64_t data_stream_seed(std::uint64_t seed);

// Deterministic given cfg.seed.
TrainResult train(NetworkSpec<float>& net, const Dataset& train_set, const Dataset* test_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct EvalResult {
  double accuracy = 0.0;
  std::vector<int> predictions;
  std::vector<InstanceTrace> traces;
};

// Inference over a dataset in fixed order. The skipping executor runs when `skipping` is set,
// the batched dense path otherwise.
EvalResult evaluate(const NetworkSpec<float>& net, const Dataset& data, std::size_t batch_size = 100,
                    bool skipping = true);

}  // namespace lcnet
