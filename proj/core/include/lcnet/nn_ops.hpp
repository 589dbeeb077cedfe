#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lcnet/random.hpp"
#include "lcnet/tensor.hpp"

namespace lcnet {

template <typename T>
struct Conv2dParams {
  Tensor<T> weight;  // (out_channels, in_channels, kernel_h, kernel_w)
  Tensor<T> bias;    // (out_channels) or undefined
  std::int64_t stride = 1;
  std::int64_t padding = 0;

  std::int64_t out_channels() const { return weight.dim(0); }
  std::int64_t in_channels() const { return weight.dim(1); }
  std::int64_t kernel_h() const { return weight.dim(2); }
  std::int64_t kernel_w() const { return weight.dim(3); }
  bool has_bias() const { return bias.defined(); }
  void validate() const;
};

template <typename T>
struct BatchNormParams {
  Tensor<T> scale;  // (channels)
  Tensor<T> shift;  // (channels)
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T momentum = T(0.1);
  T epsilon = T(1e-5);

  std::int64_t channels() const { return scale.dim(0); }
  void validate() const;
};

template <typename T>
struct LinearParams {
  Tensor<T> weight;  // (out_features, in_features)
  Tensor<T> bias;    // (out_features)

  std::int64_t out_features() const { return weight.dim(0); }
  std::int64_t in_features() const { return weight.dim(1); }
  void validate() const;
};

// Kaiming-normal fan-in initialisation, zero bias.
template <typename T>
Conv2dParams<T> make_conv2d(std::int64_t in_channels, std::int64_t out_channels,
                            std::int64_t kernel, std::int64_t stride, std::int64_t padding,
                            bool bias, Rng& rng);
template <typename T>
LinearParams<T> make_linear(std::int64_t in_features, std::int64_t out_features, Rng& rng);
template <typename T>
BatchNormParams<T> make_batch_norm(std::int64_t channels);

// floor((in + 2 * padding - kernel) / stride) + 1; throws when the result is not positive.
std::int64_t conv_output_extent(std::int64_t in, std::int64_t kernel, std::int64_t stride,
                                std::int64_t padding);

// Cross-correlation over an (N, C, H, W) input.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Conv2dParams<T>& p);

// (N, in) -> (N, out): x W^T + b.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const LinearParams<T>& p);

// Per-channel normalisation over (N, C, ...). Training mode normalises with batch statistics
// and updates the running estimates in `p`; eval mode applies the running estimates and leaves
// `p` untouched.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, BatchNormParams<T>& p, bool training);
template <typename T>
Tensor<T> batch_norm_eval(const Tensor<T>& x, const BatchNormParams<T>& p);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// (N, C, H, W) -> (N, C), mean over H x W.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

// Mean softmax cross-entropy of (N, K) logits against labels in [0, K).
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

}  // namespace lcnet
