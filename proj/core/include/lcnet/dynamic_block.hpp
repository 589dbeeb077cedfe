#pragma once

// Residual blocks augmented with a block gate and a channel gate that share one pooled input.
//
//   pooled = avg_pool(x)
//   S_L    = relu1(fc_L(pooled))            (one scalar per instance)
//   S_C    = relu1(fc_C(pooled))            (one value per first-layer channel)
//   h      = relu(bn1(conv1(x))) * S_C      (channel scaling after the first ReLU)
//   F(x)   = remaining conv/bn layers of the branch applied to h
//   out    = F(x) * S_L + shortcut(x)
//
// There is no activation after the residual addition, so S_L = 0 makes an identity-shortcut
// block exactly the identity map.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lcnet/gating.hpp"
#include "lcnet/nn_ops.hpp"
#include "lcnet/random.hpp"
#include "lcnet/tensor.hpp"

namespace lcnet {

enum class BlockKind { basic, bottleneck };

const char* to_string(BlockKind kind);
BlockKind block_kind_from_string(const std::string& name);

// Batch-norm mode and gate activation used for one forward pass.
struct ForwardMode {
  bool training = false;
  Relu1Mode gate = Relu1Mode::inference();

  static ForwardMode train(double leak = 0.01) { return {true, Relu1Mode::training(leak)}; }
  static ForwardMode eval() { return {}; }
};

template <typename T>
struct BlockSpec {
  BlockKind kind = BlockKind::basic;
  std::int64_t in_channels = 0;
  std::int64_t mid_channels = 0;  // first-layer output channels (gated by S_C)
  std::int64_t out_channels = 0;
  std::int64_t stride = 1;

  // basic: 3x3 (stride), 3x3. bottleneck: 1x1, 3x3 (stride), 1x1.
  std::vector<Conv2dParams<T>> convs;
  std::vector<BatchNormParams<T>> bns;
  std::optional<Conv2dParams<T>> projection;
  std::optional<BatchNormParams<T>> projection_bn;
  GateNet<T> block_gate;
  GateNet<T> channel_gate;

  bool needs_projection() const { return stride != 1 || in_channels != out_channels; }
  bool has_projection() const { return projection.has_value(); }
  void validate() const;
};

// For bottleneck blocks mid_channels is the inner width; basic blocks ignore it (mid = out).
template <typename T>
BlockSpec<T> make_block(BlockKind kind, std::int64_t in_channels, std::int64_t out_channels,
                        std::int64_t stride, Rng& rng, std::int64_t mid_channels = 0);

struct BlockTraceEntry {
  std::size_t block_index = 0;
  SalienceRecord salience;
  bool executed = true;
  std::int64_t active_channels = 0;

  static BlockTraceEntry from_record(std::size_t block_index, SalienceRecord record);
  // Re-derives executed / active_channels from the raw saliences.
  bool consistent() const;
};

template <typename T>
struct DenseBlockResult {
  Tensor<T> output;
  SalienceTensors<T> saliences;
  std::vector<BlockTraceEntry> traces;  // one per instance
};

template <typename T>
struct SkippingBlockResult {
  Tensor<T> output;
  std::vector<BlockTraceEntry> traces;  // one per instance
};

// Batched, differentiable. Shapes are checked and non-finite outputs raise NumericError.
template <typename T>
DenseBlockResult<T> block_forward_dense(const Tensor<T>& x, BlockSpec<T>& block,
                                        const ForwardMode& mode, std::size_t block_index = 0);

// Inference only (running BN statistics, exact ReLU-1). Runs each instance separately and
// executes only the convolution work attached to nonzero saliences: with S_L = 0 just the
// shortcut; otherwise the first conv computes only channels with S_C^k > 0 and the next conv
// reads only those channels. Not recorded on the tape.
template <typename T>
SkippingBlockResult<T> block_forward_skipping(const Tensor<T>& x, const BlockSpec<T>& block,
                                              std::size_t block_index = 0);

}  // namespace lcnet
