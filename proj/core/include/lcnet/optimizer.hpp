#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "lcnet/network.hpp"

namespace lcnet {

enum class TrainMode { from_scratch, fine_tune };

struct TrainConfig {
  int epochs = 30;
  int batch_size = 96;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double backbone_lr = 0.01;
  double gate_lr = 0.01;
  double decay_factor = 10.0;
  int decay_period = 10;
  double lambda = 0.0;
  double leak = 0.01;
  std::uint64_t seed = 1;
  TrainMode mode = TrainMode::from_scratch;
  bool augment = true;
  // Gate FC set to weight 0 / bias 1 and excluded from updates, so every salience is exactly 1.
  bool freeze_gates = false;

  // 270 epochs, ten-fold decay every 90.
  static TrainConfig cifar_recipe();
  void validate() const;
};

struct LearningRates {
  double backbone = 0.0;
  double gate = 0.0;
};

// initial * decay_factor^-floor(epoch / decay_period).
LearningRates lr_at_epoch(const TrainConfig& cfg, int epoch);

// One Nesterov update without dampening on a single tensor:
//   g' = g + wd * w;  v = mu * v + g';  w -= lr * (g' + mu * v)
template <typename T>
void sgd_nesterov_step(std::span<T> weights, std::span<const T> grads, std::span<T> velocity,
                       double lr, double momentum, double weight_decay);

template <typename T>
class SgdNesterov {
 public:
  SgdNesterov(std::vector<NamedParameter<T>> params, double momentum, double weight_decay);

  // Weight decay is applied to backbone parameters only. skip_gates leaves gate parameters
  // and their velocity untouched.
  void step(const LearningRates& lr, bool skip_gates = false);
  void zero_grad();

  const std::vector<NamedParameter<T>>& params() const { return params_; }
  const std::vector<std::vector<T>>& velocity() const { return velocity_; }

 private:
  std::vector<NamedParameter<T>> params_;
  std::vector<std::vector<T>> velocity_;
  double momentum_;
  double weight_decay_;
};

}  // namespace lcnet
