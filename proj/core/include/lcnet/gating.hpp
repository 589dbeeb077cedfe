#pragma once

// Salience gates. Both gates read the block input through one global average pool, apply a
// fully-connected layer and a ReLU-1 clamp. The block gate yields one scalar per instance (S_L)
// that scales the whole residual branch. The channel gate yields one value per first-layer
// output channel (S_C). A salience of exactly zero marks computation that may be skipped.

#include <cstdint>
#include <span>
#include <vector>

#include "lcnet/nn_ops.hpp"
#include "lcnet/random.hpp"
#include "lcnet/tensor.hpp"

namespace lcnet {

// Training uses the leaky clamp so gradients flow through both saturated sides; inference
// uses the exact clamp to [0, 1].
struct Relu1Mode {
  enum class Kind { training_leaky, inference_standard };

  Kind kind = Kind::inference_standard;
  double leak = 0.0;

  static Relu1Mode training(double leak = 0.01);
  static Relu1Mode inference() { return {}; }

  bool is_training() const { return kind == Kind::training_leaky; }
  void validate() const;
};

// Scalar form of the clamp, shared by the tensor op and the structural executor.
template <typename T>
T relu1_value(T x, const Relu1Mode& mode) {
  if (x != x) return x;
  if (mode.kind == Relu1Mode::Kind::inference_standard) {
    if (x <= T(0)) return T(0);
    return x <= T(1) ? x : T(1);
  }
  const T leak = static_cast<T>(mode.leak);
  if (x <= T(0)) return leak * x;
  if (x <= T(1)) return x;
  return T(1) + leak * (x - T(1));
}

template <typename T>
Tensor<T> relu1(const Tensor<T>& x, const Relu1Mode& mode);

enum class GateKind { block_gate, channel_gate };

template <typename T>
struct GateNet {
  LinearParams<T> fc;
  GateKind kind = GateKind::block_gate;

  std::int64_t in_features() const { return fc.in_features(); }
  std::int64_t out_features() const { return fc.out_features(); }
  // expected_outputs is the gated layer's channel count; ignored for block gates.
  void validate(std::int64_t expected_inputs, std::int64_t expected_outputs) const;
};

// fc weights ~ N(0, 0.01^2), bias +1, so a fresh gate starts fully open.
template <typename T>
GateNet<T> make_gate(GateKind kind, std::int64_t in_features, std::int64_t out_features, Rng& rng);

// Per-instance gate outputs detached from the tape.
struct SalienceRecord {
  double block_salience = 1.0;
  std::vector<double> channel_salience;
};

// Gate outputs still attached to the tape, for the regulariser.
template <typename T>
struct SalienceTensors {
  Tensor<T> block;    // (N)
  Tensor<T> channel;  // (N, C)

  std::int64_t batch() const { return block.dim(0); }
  SalienceRecord record(std::int64_t instance) const;
};

// Gate applied to an already pooled (N, C_in) vector.
template <typename T>
Tensor<T> gate_from_pooled(const Tensor<T>& pooled, const GateNet<T>& gate, const Relu1Mode& mode);

// (N, C, H, W) -> (N): block salience.
template <typename T>
Tensor<T> lnet_forward(const Tensor<T>& x, const GateNet<T>& gate, const Relu1Mode& mode);

// (N, C, H, W) -> (N, C_out): channel salience.
template <typename T>
Tensor<T> cnet_forward(const Tensor<T>& x, const GateNet<T>& gate, const Relu1Mode& mode);

// lambda * (sum |S_L| + sum |S_C|) over every block and instance.
template <typename T>
Tensor<T> gate_l1_penalty(std::span<const SalienceTensors<T>> gates, T lambda);

}  // namespace lcnet
