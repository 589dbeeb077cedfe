#pragma once

// Run configuration. JSON file first, then `--set section.key=value` overrides; the merged
// document is validated before any command starts.
//
// {
//   "data":  {"source": "synthetic" | "cifar10", "path", "train_limit", "test_limit",
//             "classes", "synthetic_train", "synthetic_test", "seed"},
//   "model": {"block", "stem_width", "blocks_per_stage", "widths", "expansion"},
//   "train": {"epochs", "batch_size", "momentum", "weight_decay", "backbone_lr", "gate_lr",
//             "decay_factor", "decay_period", "lambda", "leak", "seed", "augment",
//             "freeze_gates"},
//   "eval":  {"placement", "count_gate_flops", "batch_size", "extremes_k", "activation_block",
//             "max_channels", "histogram_bins"},
//   "checkpoint": input checkpoint directory,
//   "output_dir": directory for every artifact
// }

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "lcnet/cost_model.hpp"
#include "lcnet/network.hpp"
#include "lcnet/optimizer.hpp"

namespace lcnet::app {

struct DataConfig {
  std::string source = "synthetic";
  std::string path;
  std::int64_t train_limit = 5000;  // 0 keeps the whole split
  std::int64_t test_limit = 1000;
  int classes = 10;
  std::int64_t synthetic_train = 1000;
  std::int64_t synthetic_test = 200;
  std::uint64_t seed = 7;

  int class_count() const { return source == "cifar10" ? 10 : classes; }
};

struct EvalConfig {
  Placement placement = Placement::sequential;
  bool count_gate_flops = true;
  std::int64_t batch_size = 100;
  std::int64_t extremes_k = 10;
  std::int64_t activation_block = 0;
  std::int64_t max_channels = 50;
  std::int64_t histogram_bins = 10;
};

struct RunConfig {
  DataConfig data;
  ArchitectureSpec model;
  TrainConfig train;
  EvalConfig eval;
  std::string checkpoint;
  std::string output_dir = "lcnet_out";
};

nlohmann::json to_json(const RunConfig& cfg);

// Strict: unknown keys, wrong types and out-of-range values raise ConfigError naming the field.
RunConfig config_from_json(const nlohmann::json& j);

// "section.key=value"; value is parsed as JSON, falling back to a plain string.
void apply_override(nlohmann::json& j, const std::string& assignment);

}  // namespace lcnet::app
