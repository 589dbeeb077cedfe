#include "lcnet/dynamic_block.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "kernels.hpp"
#include "lcnet/error.hpp"

namespace lcnet {

const char* to_string(BlockKind kind) {
  return kind == BlockKind::basic ? "basic" : "bottleneck";
}

BlockKind block_kind_from_string(const std::string& name) {
  if (name == "basic") return BlockKind::basic;
  if (name == "bottleneck") return BlockKind::bottleneck;
  throw ConfigError("block", "unknown block kind '" + name + "'");
}

template <typename T>
void BlockSpec<T>::validate() const {
  const std::size_t layers = kind == BlockKind::basic ? 2 : 3;
  if (convs.size() != layers || bns.size() != layers) {
    throw ShapeError(std::string(to_string(kind)) + " block needs " + std::to_string(layers) +
                     " conv/bn pairs");
  }
  for (std::size_t i = 0; i < layers; ++i) {
    convs[i].validate();
    bns[i].validate();
    if (bns[i].channels() != convs[i].out_channels()) {
      throw ShapeError("block layer " + std::to_string(i) + " batch-norm width mismatch");
    }
    const std::int64_t expected_in = i == 0 ? in_channels : convs[i - 1].out_channels();
    if (convs[i].in_channels() != expected_in) {
      throw ShapeError("block layer " + std::to_string(i) + " expects " +
                       std::to_string(convs[i].in_channels()) + " input channels, gets " +
                       std::to_string(expected_in));
    }
  }
  if (convs.front().out_channels() != mid_channels || convs.back().out_channels() != out_channels) {
    throw ShapeError("block channel bookkeeping disagrees with its layers");
  }
  if (has_projection() != needs_projection()) {
    throw ShapeError("projection shortcut must be present iff stride != 1 or channels change");
  }
  if (has_projection()) {
    if (!projection_bn) throw ShapeError("projection shortcut without batch norm");
    projection->validate();
    if (projection->in_channels() != in_channels || projection->out_channels() != out_channels ||
        projection->stride != stride) {
      throw ShapeError("projection shortcut shape disagrees with block");
    }
  }
  block_gate.validate(in_channels, 1);
  channel_gate.validate(in_channels, mid_channels);
}

template <typename T>
BlockSpec<T> make_block(BlockKind kind, std::int64_t in_channels, std::int64_t out_channels,
                        std::int64_t stride, Rng& rng, std::int64_t mid_channels) {
  BlockSpec<T> b;
  b.kind = kind;
  b.in_channels = in_channels;
  b.out_channels = out_channels;
  b.stride = stride;
  if (kind == BlockKind::basic) {
    b.mid_channels = out_channels;
    b.convs.push_back(make_conv2d<T>(in_channels, out_channels, 3, stride, 1, false, rng));
    b.convs.push_back(make_conv2d<T>(out_channels, out_channels, 3, 1, 1, false, rng));
  } else {
    b.mid_channels = mid_channels > 0 ? mid_channels : std::max<std::int64_t>(1, out_channels / 4);
    b.convs.push_back(make_conv2d<T>(in_channels, b.mid_channels, 1, 1, 0, false, rng));
    b.convs.push_back(make_conv2d<T>(b.mid_channels, b.mid_channels, 3, stride, 1, false, rng));
    b.convs.push_back(make_conv2d<T>(b.mid_channels, out_channels, 1, 1, 0, false, rng));
  }
  for (const auto& c : b.convs) b.bns.push_back(make_batch_norm<T>(c.out_channels()));
  if (b.needs_projection()) {
    b.projection = make_conv2d<T>(in_channels, out_channels, 1, stride, 0, false, rng);
    b.projection_bn = make_batch_norm<T>(out_channels);
  }
  b.block_gate = make_gate<T>(GateKind::block_gate, in_channels, 1, rng);
  b.channel_gate = make_gate<T>(GateKind::channel_gate, in_channels, b.mid_channels, rng);
  b.validate();
  return b;
}

BlockTraceEntry BlockTraceEntry::from_record(std::size_t block_index, SalienceRecord record) {
  BlockTraceEntry e;
  e.block_index = block_index;
  e.executed = record.block_salience > 0.0;
  e.active_channels = 0;
  for (double s : record.channel_salience) e.active_channels += s > 0.0 ? 1 : 0;
  e.salience = std::move(record);
  return e;
}

bool BlockTraceEntry::consistent() const {
  std::int64_t active = 0;
  for (double s : salience.channel_salience) active += s > 0.0 ? 1 : 0;
  return executed == (salience.block_salience > 0.0) && active == active_channels;
}

namespace {

template <typename T>
void check_block_input(const Tensor<T>& x, const BlockSpec<T>& block) {
  if (x.rank() != 4 || x.dim(1) != block.in_channels) {
    throw ShapeError("block expects (N, " + std::to_string(block.in_channels) +
                     ", H, W) input, got " + shape_to_string(x.shape()));
  }
}

template <typename T>
void check_finite(const Tensor<T>& t, std::size_t block_index) {
  if (!t.all_finite()) {
    throw NumericError("non-finite activation at the output of block " +
                       std::to_string(block_index));
  }
}

}  // namespace

template <typename T>
DenseBlockResult<T> block_forward_dense(const Tensor<T>& x, BlockSpec<T>& block,
                                        const ForwardMode& mode, std::size_t block_index) {
  check_block_input(x, block);
  const auto pooled = global_avg_pool(x);
  DenseBlockResult<T> result;
  result.saliences.block = gate_from_pooled(pooled, block.block_gate, mode.gate);
  result.saliences.channel = gate_from_pooled(pooled, block.channel_gate, mode.gate);

  auto h = relu(batch_norm(conv2d(x, block.convs[0]), block.bns[0], mode.training));
  h = broadcast_mul(h, result.saliences.channel);
  if (block.kind == BlockKind::basic) {
    h = batch_norm(conv2d(h, block.convs[1]), block.bns[1], mode.training);
  } else {
    h = relu(batch_norm(conv2d(h, block.convs[1]), block.bns[1], mode.training));
    h = batch_norm(conv2d(h, block.convs[2]), block.bns[2], mode.training);
  }
  const auto shortcut = block.has_projection()
                            ? batch_norm(conv2d(x, *block.projection), *block.projection_bn,
                                         mode.training)
                            : x;
  if (h.shape() != shortcut.shape()) {
    throw ShapeError("residual branch " + shape_to_string(h.shape()) + " and shortcut " +
                     shape_to_string(shortcut.shape()) + " disagree");
  }
  result.output = add(broadcast_mul(h, result.saliences.block), shortcut);
  check_finite(result.output, block_index);

  const std::int64_t batch = x.dim(0);
  result.traces.reserve(static_cast<std::size_t>(batch));
  for (std::int64_t n = 0; n < batch; ++n) {
    result.traces.push_back(BlockTraceEntry::from_record(block_index, result.saliences.record(n)));
  }
  return result;
}

namespace {

std::vector<std::int64_t> all_indices(std::int64_t n) {
  std::vector<std::int64_t> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Weights of `p` restricted to the given output and input channels, laid out as
// (|out|, |in| * kh * kw).
template <typename T>
std::vector<T> gather_weights(const Conv2dParams<T>& p, const std::vector<std::int64_t>& out_sel,
                              const std::vector<std::int64_t>& in_sel) {
  const std::int64_t kk = p.kernel_h() * p.kernel_w();
  const std::int64_t in_total = p.in_channels();
  const auto w = p.weight.data();
  std::vector<T> out(out_sel.size() * in_sel.size() * static_cast<std::size_t>(kk));
  std::size_t pos = 0;
  for (auto o : out_sel) {
    for (auto c : in_sel) {
      const T* src = w.data() + (o * in_total + c) * kk;
      for (std::int64_t k = 0; k < kk; ++k) out[pos++] = src[k];
    }
  }
  return out;
}

template <typename T>
kernels::ConvGeometry subset_geometry(const Conv2dParams<T>& p, std::int64_t in_channels,
                                      std::int64_t out_channels, std::int64_t in_h,
                                      std::int64_t in_w) {
  kernels::ConvGeometry g;
  g.in_channels = in_channels;
  g.in_h = in_h;
  g.in_w = in_w;
  g.out_channels = out_channels;
  g.kernel_h = p.kernel_h();
  g.kernel_w = p.kernel_w();
  g.stride = p.stride;
  g.padding = p.padding;
  g.out_h = conv_output_extent(in_h, g.kernel_h, g.stride, g.padding);
  g.out_w = conv_output_extent(in_w, g.kernel_w, g.stride, g.padding);
  return g;
}

// Running-statistics batch norm on a buffer holding the listed channels, in order. Uses the
// same arithmetic as batch_norm_eval.
template <typename T>
void bn_eval_channels(T* data, const BatchNormParams<T>& p, const std::vector<std::int64_t>& channels,
                      std::int64_t spatial) {
  const auto gamma = p.scale.data();
  const auto beta = p.shift.data();
  for (std::size_t j = 0; j < channels.size(); ++j) {
    const auto c = static_cast<std::size_t>(channels[j]);
    const T inv_std = T(1) / std::sqrt(p.running_var[c] + p.epsilon);
    const T a = gamma[c] * inv_std;
    const T mu = p.running_mean[c];
    T* row = data + static_cast<std::int64_t>(j) * spatial;
    for (std::int64_t i = 0; i < spatial; ++i) row[i] = a * (row[i] - mu) + beta[c];
  }
}

template <typename T>
void relu_inplace(std::span<T> v) {
  for (auto& x : v) x = x < T(0) ? T(0) : x;
}

struct Plane {
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::int64_t pixels() const { return h * w; }
};

}  // namespace

template <typename T>
SkippingBlockResult<T> block_forward_skipping(const Tensor<T>& x, const BlockSpec<T>& block,
                                              std::size_t block_index) {
  check_block_input(x, block);
  NoGradGuard no_grad;
  const auto mode = Relu1Mode::inference();
  const auto pooled = global_avg_pool(x);
  SalienceTensors<T> gates{gate_from_pooled(pooled, block.block_gate, mode),
                           gate_from_pooled(pooled, block.channel_gate, mode)};

  const std::int64_t batch = x.dim(0);
  const Plane in_plane{x.dim(2), x.dim(3)};
  const std::int64_t in_size = block.in_channels * in_plane.pixels();
  const std::size_t last = block.convs.size() - 1;

  // Output extent of the branch (and the shortcut).
  Plane out_plane = in_plane;
  for (const auto& c : block.convs) {
    out_plane = {conv_output_extent(out_plane.h, c.kernel_h(), c.stride, c.padding),
                 conv_output_extent(out_plane.w, c.kernel_w(), c.stride, c.padding)};
  }
  const std::int64_t out_size = block.out_channels * out_plane.pixels();

  SkippingBlockResult<T> result;
  std::vector<T> out(static_cast<std::size_t>(batch * out_size));
  std::vector<T> scratch;
  const auto all_in = all_indices(block.in_channels);
  const auto all_out = all_indices(block.out_channels);

  for (std::int64_t n = 0; n < batch; ++n) {
    auto trace = BlockTraceEntry::from_record(block_index, gates.record(n));
    const T* xn = x.data().data() + n * in_size;
    T* yn = out.data() + n * out_size;

    if (block.has_projection()) {
      const auto g = subset_geometry(*block.projection, block.in_channels, block.out_channels,
                                     in_plane.h, in_plane.w);
      kernels::conv2d_instance(xn, block.projection->weight.data().data(),
                               static_cast<const T*>(nullptr), g, yn, scratch);
      bn_eval_channels(yn, *block.projection_bn, all_out, g.out_pixels());
    } else {
      std::copy(xn, xn + in_size, yn);
    }
    if (!trace.executed) {
      result.traces.push_back(std::move(trace));
      continue;
    }

    std::vector<std::int64_t> active;
    const auto& s_c = trace.salience.channel_salience;
    for (std::size_t k = 0; k < s_c.size(); ++k) {
      if (s_c[k] > 0.0) active.push_back(static_cast<std::int64_t>(k));
    }
    const auto k_active = static_cast<std::int64_t>(active.size());

    // First layer: only active output channels, then bn, relu and channel scaling.
    const auto& c0 = block.convs[0];
    auto g0 = subset_geometry(c0, block.in_channels, k_active, in_plane.h, in_plane.w);
    std::vector<T> h(static_cast<std::size_t>(k_active * g0.out_pixels()));
    if (k_active > 0) {
      const auto w0 = gather_weights(c0, active, all_in);
      kernels::conv2d_instance(xn, w0.data(), static_cast<const T*>(nullptr), g0, h.data(), scratch);
      bn_eval_channels(h.data(), block.bns[0], active, g0.out_pixels());
      relu_inplace(std::span<T>(h));
      for (std::int64_t j = 0; j < k_active; ++j) {
        const T s = static_cast<T>(s_c[static_cast<std::size_t>(active[j])]);
        T* row = h.data() + j * g0.out_pixels();
        for (std::int64_t i = 0; i < g0.out_pixels(); ++i) row[i] *= s;
      }
    }
    Plane plane{g0.out_h, g0.out_w};

    // Second layer reads only the active channels.
    const auto& c1 = block.convs[1];
    const auto mid_out = all_indices(c1.out_channels());
    auto g1 = subset_geometry(c1, k_active, c1.out_channels(), plane.h, plane.w);
    std::vector<T> h1(static_cast<std::size_t>(c1.out_channels() * g1.out_pixels()));
    const auto w1 = gather_weights(c1, mid_out, active);
    kernels::conv2d_instance(h.data(), w1.data(), static_cast<const T*>(nullptr), g1, h1.data(),
                             scratch);
    bn_eval_channels(h1.data(), block.bns[1], mid_out, g1.out_pixels());
    plane = {g1.out_h, g1.out_w};

    if (block.kind == BlockKind::bottleneck) {
      relu_inplace(std::span<T>(h1));
      const auto& c2 = block.convs[2];
      auto g2 = subset_geometry(c2, c2.in_channels(), c2.out_channels(), plane.h, plane.w);
      std::vector<T> h2(static_cast<std::size_t>(c2.out_channels() * g2.out_pixels()));
      kernels::conv2d_instance(h1.data(), c2.weight.data().data(), static_cast<const T*>(nullptr),
                               g2, h2.data(), scratch);
      bn_eval_channels(h2.data(), block.bns[last], all_indices(c2.out_channels()),
                       g2.out_pixels());
      h1 = std::move(h2);
    }

    const T s_l = static_cast<T>(trace.salience.block_salience);
    for (std::int64_t i = 0; i < out_size; ++i) yn[i] = h1[static_cast<std::size_t>(i)] * s_l + yn[i];
    result.traces.push_back(std::move(trace));
  }

  result.output = Tensor<T>({batch, block.out_channels, out_plane.h, out_plane.w}, std::move(out));
  check_finite(result.output, block_index);
  return result;
}

#define LCNET_INSTANTIATE_BLOCK(T)                                                            \
  template struct BlockSpec<T>;                                                               \
  template BlockSpec<T> make_block<T>(BlockKind, std::int64_t, std::int64_t, std::int64_t,    \
                                      Rng&, std::int64_t);                                    \
  template DenseBlockResult<T> block_forward_dense(const Tensor<T>&, BlockSpec<T>&,           \
                                                   const ForwardMode&, std::size_t);          \
  template SkippingBlockResult<T> block_forward_skipping(const Tensor<T>&,                    \
                                                         const BlockSpec<T>&, std::size_t);

LCNET_INSTANTIATE_BLOCK(float)
LCNET_INSTANTIATE_BLOCK(double)

}  // namespace lcnet
