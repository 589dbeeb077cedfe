#include "lcnet/optimizer.hpp"

#include <cmath>
#include <string>

#include "lcnet/error.hpp"

namespace lcnet {

TrainConfig TrainConfig::cifar_recipe() {
  TrainConfig c;
  c.epochs = 270;
  c.decay_period = 90;
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs", "must be positive");
  if (batch_size < 1) throw ConfigError("train.batch_size", "must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum", "must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay", "must be non-negative");
  if (!(backbone_lr > 0.0)) throw ConfigError("train.backbone_lr", "must be positive");
  if (!(gate_lr > 0.0)) throw ConfigError("train.gate_lr", "must be positive");
  if (!(decay_factor > 0.0)) throw ConfigError("train.decay_factor", "must be positive");
  if (decay_period < 1) throw ConfigError("train.decay_period", "must be positive");
  if (decay_period > epochs) throw ConfigError("train.decay_period", "must not exceed epochs");
  if (!(lambda >= 0.0)) throw ConfigError("train.lambda", "must be non-negative");
  if (!(leak >= 0.0)) throw ConfigError("train.leak", "must be non-negative");
}

LearningRates lr_at_epoch(const TrainConfig& cfg, int epoch) {
  if (epoch < 0 || epoch >= cfg.epochs) {
    throw ConfigError("epoch", "epoch " + std::to_string(epoch) + " outside [0, " +
                                   std::to_string(cfg.epochs) + ")");
  }
  const double factor = std::pow(cfg.decay_factor, -static_cast<double>(epoch / cfg.decay_period));
  return {cfg.backbone_lr * factor, cfg.gate_lr * factor};
}

template <typename T>
void sgd_nesterov_step(std::span<T> weights, std::span<const T> grads, std::span<T> velocity,
                       double lr, double momentum, double weight_decay) {
  if (grads.size() != weights.size() || velocity.size() != weights.size()) {
    throw ShapeError("optimizer state does not match parameter size");
  }
  const T mu = static_cast<T>(momentum);
  const T wd = static_cast<T>(weight_decay);
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const T g = grads[i] + wd * weights[i];
    velocity[i] = mu * velocity[i] + g;
    weights[i] -= rate * (g + mu * velocity[i]);
  }
}

template <typename T>
SgdNesterov<T>::SgdNesterov(std::vector<NamedParameter<T>> params, double momentum,
                            double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  for (const auto& p : params_) {
    if (!p.tensor.is_leaf()) throw AutogradError("optimizer parameter " + p.name + " is not a leaf");
    velocity_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), T(0));
  }
}

template <typename T>
void SgdNesterov<T>::step(const LearningRates& lr, bool skip_gates) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    const bool gate = p.group == ParamGroup::gate;
    if (gate && skip_gates) continue;
    if (!p.tensor.has_grad()) continue;
    sgd_nesterov_step<T>(p.tensor.mutable_data(), p.tensor.grad(), velocity_[i],
                         gate ? lr.gate : lr.backbone, momentum_, gate ? 0.0 : weight_decay_);
  }
}

template <typename T>
void SgdNesterov<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

#define LCNET_INSTANTIATE_OPTIMIZER(T)                                                      \
  template void sgd_nesterov_step<T>(std::span<T>, std::span<const T>, std::span<T>, double, \
                                     double, double);                                        \
  template class SgdNesterov<T>;

LCNET_INSTANTIATE_OPTIMIZER(float)
LCNET_INSTANTIATE_OPTIMIZER(double)

}  // namespace lcnet
