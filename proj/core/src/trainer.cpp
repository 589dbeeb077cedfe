#include "lcnet/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "lcnet/error.hpp"
#include "lcnet/trace_analytics.hpp"

namespace lcnet {

void freeze_gates_open(NetworkSpec<float>& net) {
  for (auto& b : net.blocks) {
    for (auto* g : {&b.block_gate, &b.channel_gate}) {
      auto w = g->fc.weight.mutable_data();
      std::fill(w.begin(), w.end(), 0.0f);
      auto bias = g->fc.bias.mutable_data();
      std::fill(bias.begin(), bias.end(), 1.0f);
      g->fc.weight.set_requires_grad(false);
      g->fc.bias.set_requires_grad(false);
    }
  }
}

std::uint64_t data_stream_seed(std::uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ULL; }

TrainResult train(NetworkSpec<float>& net, const Dataset& train_set, const Dataset* test_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  train_set.validate();
  if (train_set.size() == 0) throw DataError("training set is empty");
  if (static_cast<std::int64_t>(train_set.class_names.size()) != net.classes()) {
    throw DataError("training set has " + std::to_string(train_set.class_names.size()) +
                    " classes, network has " + std::to_string(net.classes()));
  }
  if (cfg.freeze_gates) freeze_gates_open(net);

  SgdNesterov<float> opt(parameters(net), cfg.momentum, cfg.weight_decay);
  Rng rng(data_stream_seed(cfg.seed));
  const Augmentation aug{cfg.augment, 4, true};
  const auto mode = ForwardMode::train(cfg.leak);
  const auto lambda = static_cast<float>(cfg.lambda);

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto lr = lr_at_epoch(cfg, epoch);
    const auto batches = epoch_batches(train_set.size(), static_cast<std::size_t>(cfg.batch_size), true, rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::vector<InstanceTrace> traces;
    traces.reserve(train_set.size());
    for (const auto& idx : batches) {
      const auto batch = make_batch(train_set, idx, aug, rng);
      auto fwd = network_forward(batch.images, net, mode);
      auto loss = total_loss<float>(fwd.logits, batch.labels, fwd.saliences, lambda);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(result.step_losses.size()));
      }
      opt.zero_grad();
      loss.backward();
      opt.step(lr, cfg.freeze_gates);
      result.step_losses.push_back(value);
      loss_sum += value * static_cast<double>(idx.size());
      const auto pred = argmax_rows(fwd.logits);
      for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.labels[i] ? 1 : 0;
      for (auto& t : fwd.traces) traces.push_back(std::move(t));
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.loss = loss_sum / static_cast<double>(train_set.size());
    m.accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
    const auto stats = gate_stats(traces);
    m.mean_block_salience = stats.mean_block_salience;
    m.channel_sparsity = stats.channel_sparsity;
    m.gate_sparsity = stats.gate_sparsity;
    m.backbone_lr = lr.backbone;
    m.gate_lr = lr.gate;
    bool improved = true;
    if (test_set) {
      m.test_accuracy = evaluate(net, *test_set, 100, false).accuracy;
      improved = result.best_epoch < 0 || *m.test_accuracy > result.best_test_accuracy;
      if (improved) {
        result.best_epoch = epoch;
        result.best_test_accuracy = *m.test_accuracy;
      }
    } else {
      result.best_epoch = epoch;
    }
    result.history.push_back(m);
    if (on_epoch) on_epoch(m, net, improved);
  }
  return result;
}

EvalResult evaluate(const NetworkSpec<float>& net, const Dataset& data, std::size_t batch_size,
                    bool skipping) {
  data.validate();
  if (batch_size == 0) throw ConfigError("eval.batch_size", "must be positive");
  NoGradGuard no_grad;
  EvalResult r;
  NetworkSpec<float> dense = net;
  Rng unused(0);
  const Augmentation none{};
  std::size_t correct = 0;
  for (const auto& idx : epoch_batches(data.size(), batch_size, false, unused)) {
    const auto batch = make_batch(data, idx, none, unused);
    auto fwd = skipping ? network_forward_skipping(batch.images, net)
                        : network_forward(batch.images, dense, ForwardMode::eval());
    const auto pred = argmax_rows(fwd.logits);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      correct += pred[i] == batch.labels[i] ? 1 : 0;
      r.predictions.push_back(pred[i]);
      r.traces.push_back(std::move(fwd.traces[i]));
    }
  }
  r.accuracy = data.size() == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.size());
  return r;
}

}  // namespace lcnet
