#include "lcnet/nn_ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kernels.hpp"
#include "lcnet/error.hpp"

namespace lcnet {

template <typename T>
void Conv2dParams<T>::validate() const {
  if (!weight.defined() || weight.rank() != 4) throw ShapeError("conv2d weight must have 4 axes");
  if (out_channels() < 1 || in_channels() < 1 || kernel_h() < 1 || kernel_w() < 1) {
    throw ShapeError("conv2d weight has an empty extent: " + shape_to_string(weight.shape()));
  }
  if (stride < 1) throw ShapeError("conv2d stride must be positive");
  if (padding < 0) throw ShapeError("conv2d padding must be non-negative");
  if (bias.defined() && bias.shape() != Shape{out_channels()}) {
    throw ShapeError("conv2d bias shape " + shape_to_string(bias.shape()) +
                     " does not match out_channels " + std::to_string(out_channels()));
  }
}

template <typename T>
void BatchNormParams<T>::validate() const {
  const auto c = static_cast<std::size_t>(channels());
  if (scale.rank() != 1 || shift.shape() != scale.shape() || running_mean.size() != c ||
      running_var.size() != c) {
    throw ShapeError("batch_norm parameter sizes disagree");
  }
  if (!(momentum > T(0) && momentum < T(1))) throw ShapeError("batch_norm momentum not in (0,1)");
  if (!(epsilon > T(0))) throw ShapeError("batch_norm epsilon must be positive");
  for (T v : running_var) {
    if (v < T(0)) throw ShapeError("batch_norm running variance is negative");
  }
}

template <typename T>
void LinearParams<T>::validate() const {
  if (weight.rank() != 2) throw ShapeError("linear weight must have 2 axes");
  if (bias.shape() != Shape{out_features()}) {
    throw ShapeError("linear bias shape " + shape_to_string(bias.shape()) +
                     " does not match out_features " + std::to_string(out_features()));
  }
}

namespace {

template <typename T>
std::vector<T> normal_values(std::size_t n, double stddev, Rng& rng) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.normal(0.0, stddev));
  return v;
}

}  // namespace

template <typename T>
Conv2dParams<T> make_conv2d(std::int64_t in_channels, std::int64_t out_channels,
                            std::int64_t kernel, std::int64_t stride, std::int64_t padding,
                            bool bias, Rng& rng) {
  Conv2dParams<T> p;
  const std::int64_t fan_in = in_channels * kernel * kernel;
  Shape shape{out_channels, in_channels, kernel, kernel};
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  p.weight = Tensor<T>(shape, normal_values<T>(n, std::sqrt(2.0 / static_cast<double>(fan_in)), rng),
                       true);
  if (bias) p.bias = Tensor<T>::zeros({out_channels}, true);
  p.stride = stride;
  p.padding = padding;
  p.validate();
  return p;
}

template <typename T>
LinearParams<T> make_linear(std::int64_t in_features, std::int64_t out_features, Rng& rng) {
  LinearParams<T> p;
  const auto n = static_cast<std::size_t>(in_features * out_features);
  p.weight = Tensor<T>({out_features, in_features},
                       normal_values<T>(n, std::sqrt(2.0 / static_cast<double>(in_features)), rng),
                       true);
  p.bias = Tensor<T>::zeros({out_features}, true);
  p.validate();
  return p;
}

template <typename T>
BatchNormParams<T> make_batch_norm(std::int64_t channels) {
  BatchNormParams<T> p;
  p.scale = Tensor<T>::full({channels}, T(1), true);
  p.shift = Tensor<T>::zeros({channels}, true);
  p.running_mean.assign(static_cast<std::size_t>(channels), T(0));
  p.running_var.assign(static_cast<std::size_t>(channels), T(1));
  return p;
}

std::int64_t conv_output_extent(std::int64_t in, std::int64_t kernel, std::int64_t stride,
                                std::int64_t padding) {
  const std::int64_t span = in + 2 * padding - kernel;
  if (span < 0) {
    throw ShapeError("conv2d: kernel extent " + std::to_string(kernel) +
                     " exceeds padded input extent " + std::to_string(in + 2 * padding));
  }
  return span / stride + 1;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Conv2dParams<T>& p) {
  p.validate();
  if (x.rank() != 4) throw ShapeError("conv2d expects (N, C, H, W), got " + shape_to_string(x.shape()));
  if (x.dim(1) != p.in_channels()) {
    throw ShapeError("conv2d: input has " + std::to_string(x.dim(1)) +
                     " channels but weight expects " + std::to_string(p.in_channels()));
  }
  kernels::ConvGeometry g;
  g.in_channels = p.in_channels();
  g.in_h = x.dim(2);
  g.in_w = x.dim(3);
  g.out_channels = p.out_channels();
  g.kernel_h = p.kernel_h();
  g.kernel_w = p.kernel_w();
  g.stride = p.stride;
  g.padding = p.padding;
  g.out_h = conv_output_extent(g.in_h, g.kernel_h, g.stride, g.padding);
  g.out_w = conv_output_extent(g.in_w, g.kernel_w, g.stride, g.padding);

  const std::int64_t batch = x.dim(0);
  const std::int64_t in_size = g.in_channels * g.in_h * g.in_w;
  const std::int64_t out_size = g.out_channels * g.out_pixels();
  std::vector<T> out(static_cast<std::size_t>(batch * out_size));
  std::vector<T> scratch;
  const T* bias = p.has_bias() ? p.bias.data().data() : nullptr;
  for (std::int64_t n = 0; n < batch; ++n) {
    kernels::conv2d_instance(x.data().data() + n * in_size, p.weight.data().data(), bias, g,
                             out.data() + n * out_size, scratch);
  }

  const bool has_bias = p.has_bias();
  return detail::make_result<T>(
      {batch, g.out_channels, g.out_h, g.out_w}, std::move(out), "conv2d",
      {&x, &p.weight, &p.bias},
      [g, batch, in_size, out_size, has_bias](const detail::GradNode<T>& node,
                                              std::span<const T> grad) {
        const T* xd = node.input_data(0).data();
        const T* wd = node.input_data(1).data();
        auto gx = node.input_grad(0);
        auto gw = node.input_grad(1);
        auto gb = has_bias ? node.input_grad(2) : std::span<T>{};
        const std::int64_t patch = g.patch();
        const std::int64_t pixels = g.out_pixels();
        std::vector<T> cols;
        std::vector<T> dcols;
        for (std::int64_t n = 0; n < batch; ++n) {
          const T* gn = grad.data() + n * out_size;
          if (!gw.empty()) {
            const T* cn = xd + n * in_size;
            if (!g.is_pointwise()) {
              cols.resize(static_cast<std::size_t>(patch * pixels));
              kernels::im2col(cn, g, cols.data());
              cn = cols.data();
            }
            kernels::gemm<T>(false, true, g.out_channels, patch, pixels, gn, cn, gw.data(), true);
          }
          if (!gx.empty()) {
            T* dx = gx.data() + n * in_size;
            if (g.is_pointwise()) {
              kernels::gemm<T>(true, false, patch, pixels, g.out_channels, wd, gn, dx, true);
            } else {
              dcols.resize(static_cast<std::size_t>(patch * pixels));
              kernels::gemm<T>(true, false, patch, pixels, g.out_channels, wd, gn, dcols.data(),
                               false);
              kernels::col2im_add(dcols.data(), g, dx);
            }
          }
          if (!gb.empty()) {
            for (std::int64_t o = 0; o < g.out_channels; ++o) {
              T acc = 0;
              for (std::int64_t q = 0; q < pixels; ++q) acc += gn[o * pixels + q];
              gb[static_cast<std::size_t>(o)] += acc;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const LinearParams<T>& p) {
  p.validate();
  if (x.rank() != 2 || x.dim(1) != p.in_features()) {
    throw ShapeError("linear: input shape " + shape_to_string(x.shape()) +
                     " incompatible with in_features " + std::to_string(p.in_features()));
  }
  const std::int64_t batch = x.dim(0);
  const std::int64_t in = p.in_features();
  const std::int64_t outf = p.out_features();
  std::vector<T> out(static_cast<std::size_t>(batch * outf));
  kernels::gemm<T>(false, true, batch, outf, in, x.data().data(), p.weight.data().data(),
                   out.data(), false);
  const auto b = p.bias.data();
  for (std::int64_t n = 0; n < batch; ++n)
    for (std::int64_t o = 0; o < outf; ++o) out[n * outf + o] += b[o];

  return detail::make_result<T>(
      {batch, outf}, std::move(out), "linear", {&x, &p.weight, &p.bias},
      [batch, in, outf](const detail::GradNode<T>& node, std::span<const T> g) {
        auto gx = node.input_grad(0);
        if (!gx.empty()) {
          kernels::gemm<T>(false, false, batch, in, outf, g.data(), node.input_data(1).data(),
                           gx.data(), true);
        }
        auto gw = node.input_grad(1);
        if (!gw.empty()) {
          kernels::gemm<T>(true, false, outf, in, batch, g.data(), node.input_data(0).data(),
                           gw.data(), true);
        }
        auto gb = node.input_grad(2);
        if (!gb.empty()) {
          for (std::int64_t n = 0; n < batch; ++n)
            for (std::int64_t o = 0; o < outf; ++o) gb[o] += g[n * outf + o];
        }
      });
}

namespace {

template <typename T>
void check_bn_input(const Tensor<T>& x, const BatchNormParams<T>& p) {
  p.validate();
  if (x.rank() < 2 || x.dim(1) != p.channels()) {
    throw ShapeError("batch_norm: input shape " + shape_to_string(x.shape()) +
                     " does not have " + std::to_string(p.channels()) + " channels");
  }
}

}  // namespace

template <typename T>
Tensor<T> batch_norm_eval(const Tensor<T>& x, const BatchNormParams<T>& p) {
  check_bn_input(x, p);
  const std::int64_t batch = x.dim(0);
  const std::int64_t channels = p.channels();
  const std::int64_t spatial = x.numel() / std::max<std::int64_t>(1, batch * channels);
  std::vector<T> inv_std(static_cast<std::size_t>(channels));
  for (std::int64_t c = 0; c < channels; ++c) {
    inv_std[c] = T(1) / std::sqrt(p.running_var[c] + p.epsilon);
  }
  const auto xd = x.data();
  const auto gamma = p.scale.data();
  const auto beta = p.shift.data();
  std::vector<T> out(xd.size());
  for (std::int64_t n = 0; n < batch; ++n) {
    for (std::int64_t c = 0; c < channels; ++c) {
      const std::int64_t base = (n * channels + c) * spatial;
      const T a = gamma[c] * inv_std[c];
      const T mu = p.running_mean[c];
      for (std::int64_t i = 0; i < spatial; ++i) out[base + i] = a * (xd[base + i] - mu) + beta[c];
    }
  }
  std::vector<T> running_mean = p.running_mean;
  return detail::make_result<T>(
      x.shape(), std::move(out), "batch_norm_eval", {&x, &p.scale, &p.shift},
      [batch, channels, spatial, inv_std, running_mean](const detail::GradNode<T>& node,
                                                        std::span<const T> g) {
        const auto xd = node.input_data(0);
        const auto gamma = node.input_data(1);
        auto gx = node.input_grad(0);
        auto gg = node.input_grad(1);
        auto gbeta = node.input_grad(2);
        for (std::int64_t c = 0; c < channels; ++c) {
          T sum_g = 0;
          T sum_gx = 0;
          for (std::int64_t n = 0; n < batch; ++n) {
            const std::int64_t base = (n * channels + c) * spatial;
            for (std::int64_t i = 0; i < spatial; ++i) {
              const T gi = g[base + i];
              sum_g += gi;
              sum_gx += gi * (xd[base + i] - running_mean[c]) * inv_std[c];
              if (!gx.empty()) gx[base + i] += gi * gamma[c] * inv_std[c];
            }
          }
          if (!gg.empty()) gg[c] += sum_gx;
          if (!gbeta.empty()) gbeta[c] += sum_g;
        }
      });
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, BatchNormParams<T>& p, bool training) {
  if (!training) return batch_norm_eval(x, p);
  check_bn_input(x, p);
  const std::int64_t batch = x.dim(0);
  const std::int64_t channels = p.channels();
  const std::int64_t spatial = x.numel() / std::max<std::int64_t>(1, batch * channels);
  const std::int64_t count = batch * spatial;
  if (count < 1) throw ShapeError("batch_norm: empty batch");

  const auto xd = x.data();
  const auto gamma = p.scale.data();
  const auto beta = p.shift.data();
  std::vector<T> xhat(xd.size());
  std::vector<T> inv_std(static_cast<std::size_t>(channels));
  std::vector<T> out(xd.size());
  for (std::int64_t c = 0; c < channels; ++c) {
    T acc = 0;
    for (std::int64_t n = 0; n < batch; ++n) {
      const std::int64_t base = (n * channels + c) * spatial;
      for (std::int64_t i = 0; i < spatial; ++i) acc += xd[base + i];
    }
    const T mu = acc / static_cast<T>(count);
    T sq = 0;
    for (std::int64_t n = 0; n < batch; ++n) {
      const std::int64_t base = (n * channels + c) * spatial;
      for (std::int64_t i = 0; i < spatial; ++i) {
        const T d = xd[base + i] - mu;
        sq += d * d;
      }
    }
    const T var = sq / static_cast<T>(count);
    inv_std[c] = T(1) / std::sqrt(var + p.epsilon);
    for (std::int64_t n = 0; n < batch; ++n) {
      const std::int64_t base = (n * channels + c) * spatial;
      for (std::int64_t i = 0; i < spatial; ++i) {
        const T xh = (xd[base + i] - mu) * inv_std[c];
        xhat[base + i] = xh;
        out[base + i] = gamma[c] * xh + beta[c];
      }
    }
    const T unbiased = count > 1 ? sq / static_cast<T>(count - 1) : var;
    p.running_mean[c] = (T(1) - p.momentum) * p.running_mean[c] + p.momentum * mu;
    p.running_var[c] = (T(1) - p.momentum) * p.running_var[c] + p.momentum * unbiased;
  }

  return detail::make_result<T>(
      x.shape(), std::move(out), "batch_norm", {&x, &p.scale, &p.shift},
      [batch, channels, spatial, count, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          const detail::GradNode<T>& node, std::span<const T> g) {
        const auto gamma = node.input_data(1);
        auto gx = node.input_grad(0);
        auto gg = node.input_grad(1);
        auto gbeta = node.input_grad(2);
        for (std::int64_t c = 0; c < channels; ++c) {
          T sum_g = 0;
          T sum_gxh = 0;
          for (std::int64_t n = 0; n < batch; ++n) {
            const std::int64_t base = (n * channels + c) * spatial;
            for (std::int64_t i = 0; i < spatial; ++i) {
              sum_g += g[base + i];
              sum_gxh += g[base + i] * xhat[base + i];
            }
          }
          if (!gg.empty()) gg[c] += sum_gxh;
          if (!gbeta.empty()) gbeta[c] += sum_g;
          if (gx.empty()) continue;
          const T k = gamma[c] * inv_std[c] / static_cast<T>(count);
          const T m = static_cast<T>(count);
          for (std::int64_t n = 0; n < batch; ++n) {
            const std::int64_t base = (n * channels + c) * spatial;
            for (std::int64_t i = 0; i < spatial; ++i) {
              gx[base + i] += k * (m * g[base + i] - sum_g - xhat[base + i] * sum_gxh);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  const auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] < T(0) ? T(0) : xd[i];  // NaN passes through
  return detail::make_result<T>(x.shape(), std::move(out), "relu", {&x},
                                [](const detail::GradNode<T>& node, std::span<const T> g) {
                                  const auto xd = node.input_data(0);
                                  auto gx = node.input_grad(0);
                                  for (std::size_t i = 0; i < gx.size(); ++i) {
                                    if (xd[i] > T(0)) gx[i] += g[i];
                                  }
                                });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  if (x.rank() != 4) {
    throw ShapeError("global_avg_pool expects (N, C, H, W), got " + shape_to_string(x.shape()));
  }
  const std::int64_t batch = x.dim(0);
  const std::int64_t channels = x.dim(1);
  const std::int64_t spatial = x.dim(2) * x.dim(3);
  if (spatial == 0) throw ShapeError("global_avg_pool over an empty spatial extent");
  const auto xd = x.data();
  std::vector<T> out(static_cast<std::size_t>(batch * channels));
  const T inv = T(1) / static_cast<T>(spatial);
  for (std::int64_t nc = 0; nc < batch * channels; ++nc) {
    T acc = 0;
    for (std::int64_t i = 0; i < spatial; ++i) acc += xd[nc * spatial + i];
    out[nc] = acc * inv;
  }
  return detail::make_result<T>({batch, channels}, std::move(out), "global_avg_pool", {&x},
                                [spatial, inv](const detail::GradNode<T>& node, std::span<const T> g) {
                                  auto gx = node.input_grad(0);
                                  for (std::size_t nc = 0; nc < g.size(); ++nc) {
                                    const T v = g[nc] * inv;
                                    for (std::int64_t i = 0; i < spatial; ++i) gx[nc * spatial + i] += v;
                                  }
                                });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2) {
    throw ShapeError("cross_entropy expects (N, K) logits, got " + shape_to_string(logits.shape()));
  }
  const std::int64_t batch = logits.dim(0);
  const std::int64_t classes = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != batch) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(batch));
  }
  if (batch == 0) throw ShapeError("cross_entropy on an empty batch");
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] < 0 || labels[n] >= classes) {
      throw DataError("label " + std::to_string(labels[n]) + " at position " + std::to_string(n) +
                      " outside [0, " + std::to_string(classes) + ")");
    }
  }
  const auto z = logits.data();
  std::vector<T> probs(z.size());
  T total = 0;
  for (std::int64_t n = 0; n < batch; ++n) {
    const T* row = z.data() + n * classes;
    const T peak = *std::max_element(row, row + classes);
    T denom = 0;
    for (std::int64_t k = 0; k < classes; ++k) {
      probs[n * classes + k] = std::exp(row[k] - peak);
      denom += probs[n * classes + k];
    }
    for (std::int64_t k = 0; k < classes; ++k) probs[n * classes + k] /= denom;
    total += std::log(denom) + peak - row[labels[n]];
  }
  std::vector<int> owned_labels(labels.begin(), labels.end());
  return detail::make_result<T>(
      Shape{}, std::vector<T>{total / static_cast<T>(batch)}, "cross_entropy", {&logits},
      [batch, classes, probs = std::move(probs), owned_labels = std::move(owned_labels)](
          const detail::GradNode<T>& node, std::span<const T> g) {
        auto gz = node.input_grad(0);
        const T k = g[0] / static_cast<T>(batch);
        for (std::int64_t n = 0; n < batch; ++n) {
          for (std::int64_t c = 0; c < classes; ++c) {
            const T target = c == owned_labels[n] ? T(1) : T(0);
            gz[n * classes + c] += k * (probs[n * classes + c] - target);
          }
        }
      });
}

#define LCNET_INSTANTIATE_NN(T)                                                                \
  template struct Conv2dParams<T>;                                                             \
  template struct BatchNormParams<T>;                                                          \
  template struct LinearParams<T>;                                                             \
  template Conv2dParams<T> make_conv2d<T>(std::int64_t, std::int64_t, std::int64_t,            \
                                          std::int64_t, std::int64_t, bool, Rng&);             \
  template LinearParams<T> make_linear<T>(std::int64_t, std::int64_t, Rng&);                   \
  template BatchNormParams<T> make_batch_norm<T>(std::int64_t);                                \
  template Tensor<T> conv2d(const Tensor<T>&, const Conv2dParams<T>&);                         \
  template Tensor<T> linear(const Tensor<T>&, const LinearParams<T>&);                         \
  template Tensor<T> batch_norm(const Tensor<T>&, BatchNormParams<T>&, bool);                  \
  template Tensor<T> batch_norm_eval(const Tensor<T>&, const BatchNormParams<T>&);             \
  template Tensor<T> relu(const Tensor<T>&);                                                   \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                        \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);

LCNET_INSTANTIATE_NN(float)
LCNET_INSTANTIATE_NN(double)

}  // namespace lcnet
