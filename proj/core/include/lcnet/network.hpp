#pragma once

// Gated residual network: stem conv/bn/relu, a stack of gated blocks, relu, global average pool
// and a linear classifier.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lcnet/dynamic_block.hpp"
#include "lcnet/gating.hpp"
#include "lcnet/nn_ops.hpp"
#include "lcnet/tensor.hpp"

namespace lcnet {

struct ArchitectureSpec {
  BlockKind block = BlockKind::basic;
  std::int64_t in_channels = 3;
  std::int64_t stem_width = 16;
  std::vector<std::int64_t> blocks_per_stage{2, 2, 2};
  std::vector<std::int64_t> widths{16, 32, 64};
  std::int64_t classes = 10;
  // Bottleneck output width = stage width * expansion; the inner width is the stage width.
  std::int64_t expansion = 4;

  std::size_t block_count() const;
  void validate() const;
};

nlohmann::json to_json(const ArchitectureSpec& arch);
// Missing keys keep their defaults; unknown keys and bad values raise ConfigError.
ArchitectureSpec architecture_from_json(const nlohmann::json& j, const std::string& prefix = "model");

template <typename T>
struct NetworkSpec {
  ArchitectureSpec arch;
  Conv2dParams<T> stem;
  BatchNormParams<T> stem_bn;
  std::vector<BlockSpec<T>> blocks;
  LinearParams<T> classifier;

  std::int64_t classes() const { return classifier.out_features(); }
  void validate() const;
};

// First stage keeps resolution, every later stage halves it in its first block.
template <typename T>
NetworkSpec<T> build_network(const ArchitectureSpec& arch, std::uint64_t seed);

// Per-block entries for one instance.
using InstanceTrace = std::vector<BlockTraceEntry>;

template <typename T>
struct ForwardResult {
  Tensor<T> logits;
  std::vector<SalienceTensors<T>> saliences;  // per block; empty for the skipping executor
  std::vector<InstanceTrace> traces;          // per instance
};

template <typename T>
ForwardResult<T> network_forward(const Tensor<T>& x, NetworkSpec<T>& net, const ForwardMode& mode);

// Inference with structural skipping in every block.
template <typename T>
ForwardResult<T> network_forward_skipping(const Tensor<T>& x, const NetworkSpec<T>& net);

// Mean cross-entropy plus the L1 gate penalty.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& logits, std::span<const int> labels,
                     std::span<const SalienceTensors<T>> saliences, T lambda);

enum class ParamGroup { backbone, gate };

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;  // aliases the network's storage
  ParamGroup group = ParamGroup::backbone;
};

template <typename T>
struct NamedBuffer {
  std::string name;
  std::vector<T>* values = nullptr;
};

// Fixed traversal order; used by the optimizer and the checkpoint writer.
template <typename T>
std::vector<NamedParameter<T>> parameters(NetworkSpec<T>& net);
template <typename T>
std::vector<NamedBuffer<T>> buffers(NetworkSpec<T>& net);

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits);

}  // namespace lcnet
