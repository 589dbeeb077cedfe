#include "lcnet/network.hpp"

#include <numeric>

#include "lcnet/error.hpp"
#include "lcnet/random.hpp"

namespace lcnet {

std::size_t ArchitectureSpec::block_count() const {
  return static_cast<std::size_t>(
      std::accumulate(blocks_per_stage.begin(), blocks_per_stage.end(), std::int64_t{0}));
}

void ArchitectureSpec::validate() const {
  if (in_channels < 1) throw ConfigError("model.in_channels", "must be positive");
  if (stem_width < 1) throw ConfigError("model.stem_width", "must be positive");
  if (classes < 2) throw ConfigError("model.classes", "need at least two classes");
  if (widths.empty()) throw ConfigError("model.widths", "need at least one stage");
  if (widths.size() != blocks_per_stage.size()) {
    throw ConfigError("model.blocks_per_stage", "must have one entry per stage width");
  }
  for (auto w : widths) {
    if (w < 1) throw ConfigError("model.widths", "stage widths must be positive");
  }
  for (auto b : blocks_per_stage) {
    if (b < 1) throw ConfigError("model.blocks_per_stage", "each stage needs at least one block");
  }
  if (block == BlockKind::bottleneck && expansion < 1) {
    throw ConfigError("model.expansion", "must be positive");
  }
}

nlohmann::json to_json(const ArchitectureSpec& arch) {
  return {{"block", to_string(arch.block)},
          {"in_channels", arch.in_channels},
          {"stem_width", arch.stem_width},
          {"blocks_per_stage", arch.blocks_per_stage},
          {"widths", arch.widths},
          {"classes", arch.classes},
          {"expansion", arch.expansion}};
}

namespace {

std::int64_t read_int(const nlohmann::json& v, const std::string& field) {
  if (!v.is_number_integer()) throw ConfigError(field, "expected an integer");
  return v.get<std::int64_t>();
}

std::vector<std::int64_t> read_int_list(const nlohmann::json& v, const std::string& field) {
  if (!v.is_array()) throw ConfigError(field, "expected an array of integers");
  std::vector<std::int64_t> out;
  for (const auto& e : v) out.push_back(read_int(e, field));
  return out;
}

}  // namespace

ArchitectureSpec architecture_from_json(const nlohmann::json& j, const std::string& prefix) {
  if (!j.is_object()) throw ConfigError(prefix, "expected an object");
  ArchitectureSpec a;
  for (const auto& [key, v] : j.items()) {
    const std::string field = prefix + "." + key;
    if (key == "block") {
      if (!v.is_string()) throw ConfigError(field, "expected \"basic\" or \"bottleneck\"");
      try {
        a.block = block_kind_from_string(v.get<std::string>());
      } catch (const ConfigError& e) {
        throw ConfigError(field, "expected \"basic\" or \"bottleneck\"");
      }
    } else if (key == "in_channels") {
      a.in_channels = read_int(v, field);
    } else if (key == "stem_width") {
      a.stem_width = read_int(v, field);
    } else if (key == "blocks_per_stage") {
      a.blocks_per_stage = read_int_list(v, field);
    } else if (key == "widths") {
      a.widths = read_int_list(v, field);
    } else if (key == "classes") {
      a.classes = read_int(v, field);
    } else if (key == "expansion") {
      a.expansion = read_int(v, field);
    } else {
      throw ConfigError(field, "unknown key");
    }
  }
  try {
    a.validate();
  } catch (const ConfigError& e) {
    const auto dot = e.field().find('.');
    throw ConfigError(prefix + e.field().substr(dot), e.what());
  }
  return a;
}

template <typename T>
void NetworkSpec<T>::validate() const {
  arch.validate();
  stem.validate();
  stem_bn.validate();
  classifier.validate();
  if (stem.in_channels() != arch.in_channels) throw ShapeError("stem input channels disagree");
  if (stem_bn.channels() != stem.out_channels()) throw ShapeError("stem batch norm width disagrees");
  if (blocks.size() != arch.block_count()) throw ShapeError("block count disagrees with stages");
  std::int64_t channels = stem.out_channels();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].validate();
    if (blocks[i].in_channels != channels) {
      throw ShapeError("block " + std::to_string(i) + " expects " +
                       std::to_string(blocks[i].in_channels) + " input channels, previous layer gives " +
                       std::to_string(channels));
    }
    channels = blocks[i].out_channels;
  }
  if (classifier.in_features() != channels) {
    throw ShapeError("classifier expects " + std::to_string(classifier.in_features()) +
                     " features, last block gives " + std::to_string(channels));
  }
  if (classifier.out_features() != arch.classes) throw ShapeError("classifier class count disagrees");
}

template <typename T>
NetworkSpec<T> build_network(const ArchitectureSpec& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(seed);
  NetworkSpec<T> net;
  net.arch = arch;
  net.stem = make_conv2d<T>(arch.in_channels, arch.stem_width, 3, 1, 1, false, rng);
  net.stem_bn = make_batch_norm<T>(arch.stem_width);
  std::int64_t channels = arch.stem_width;
  for (std::size_t s = 0; s < arch.widths.size(); ++s) {
    const std::int64_t width = arch.widths[s];
    for (std::int64_t b = 0; b < arch.blocks_per_stage[s]; ++b) {
      const std::int64_t stride = (s > 0 && b == 0) ? 2 : 1;
      if (arch.block == BlockKind::basic) {
        net.blocks.push_back(make_block<T>(BlockKind::basic, channels, width, stride, rng));
        channels = width;
      } else {
        const std::int64_t out = width * arch.expansion;
        net.blocks.push_back(make_block<T>(BlockKind::bottleneck, channels, out, stride, rng, width));
        channels = out;
      }
    }
  }
  net.classifier = make_linear<T>(channels, arch.classes, rng);
  net.validate();
  return net;
}

namespace {

template <typename T>
void check_network_input(const Tensor<T>& x, const NetworkSpec<T>& net) {
  if (x.rank() != 4 || x.dim(1) != net.stem.in_channels()) {
    throw ShapeError("network expects (N, " + std::to_string(net.stem.in_channels()) +
                     ", H, W) input, got " + shape_to_string(x.shape()));
  }
}

template <typename T>
Tensor<T> head(const Tensor<T>& features, const NetworkSpec<T>& net) {
  auto logits = linear(global_avg_pool(relu(features)), net.classifier);
  if (!logits.all_finite()) throw NumericError("non-finite logits");
  return logits;
}

}  // namespace

template <typename T>
ForwardResult<T> network_forward(const Tensor<T>& x, NetworkSpec<T>& net, const ForwardMode& mode) {
  check_network_input(x, net);
  ForwardResult<T> result;
  const auto batch = static_cast<std::size_t>(x.dim(0));
  result.traces.assign(batch, {});
  auto h = relu(batch_norm(conv2d(x, net.stem), net.stem_bn, mode.training));
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    auto r = block_forward_dense(h, net.blocks[i], mode, i);
    h = r.output;
    result.saliences.push_back(std::move(r.saliences));
    for (std::size_t n = 0; n < batch; ++n) result.traces[n].push_back(std::move(r.traces[n]));
  }
  result.logits = head(h, net);
  return result;
}

template <typename T>
ForwardResult<T> network_forward_skipping(const Tensor<T>& x, const NetworkSpec<T>& net) {
  check_network_input(x, net);
  NoGradGuard no_grad;
  ForwardResult<T> result;
  const auto batch = static_cast<std::size_t>(x.dim(0));
  result.traces.assign(batch, {});
  auto h = relu(batch_norm_eval(conv2d(x, net.stem), net.stem_bn));
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    auto r = block_forward_skipping(h, net.blocks[i], i);
    h = r.output;
    for (std::size_t n = 0; n < batch; ++n) result.traces[n].push_back(std::move(r.traces[n]));
  }
  result.logits = head(h, net);
  return result;
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& logits, std::span<const int> labels,
                     std::span<const SalienceTensors<T>> saliences, T lambda) {
  if (lambda < T(0)) throw ConfigError("lambda", "L1 gate penalty must be non-negative");
  auto ce = cross_entropy(logits, labels);
  if (lambda == T(0)) return ce;
  auto loss = add(ce, gate_l1_penalty(saliences, lambda));
  if (!loss.all_finite()) throw NumericError("non-finite loss");
  return loss;
}

namespace {

template <typename T>
void push_conv(std::vector<NamedParameter<T>>& out, const std::string& name, Conv2dParams<T>& c) {
  out.push_back({name + ".weight", c.weight, ParamGroup::backbone});
  if (c.has_bias()) out.push_back({name + ".bias", c.bias, ParamGroup::backbone});
}

template <typename T>
void push_bn(std::vector<NamedParameter<T>>& out, const std::string& name, BatchNormParams<T>& b) {
  out.push_back({name + ".scale", b.scale, ParamGroup::backbone});
  out.push_back({name + ".shift", b.shift, ParamGroup::backbone});
}

template <typename T>
void push_linear(std::vector<NamedParameter<T>>& out, const std::string& name, LinearParams<T>& l,
                 ParamGroup group) {
  out.push_back({name + ".weight", l.weight, group});
  out.push_back({name + ".bias", l.bias, group});
}

}  // namespace

template <typename T>
std::vector<NamedParameter<T>> parameters(NetworkSpec<T>& net) {
  std::vector<NamedParameter<T>> out;
  push_conv(out, "stem", net.stem);
  push_bn(out, "stem_bn", net.stem_bn);
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    auto& b = net.blocks[i];
    const std::string p = "blocks." + std::to_string(i);
    for (std::size_t l = 0; l < b.convs.size(); ++l) {
      push_conv(out, p + ".conv" + std::to_string(l), b.convs[l]);
      push_bn(out, p + ".bn" + std::to_string(l), b.bns[l]);
    }
    if (b.has_projection()) {
      push_conv(out, p + ".projection", *b.projection);
      push_bn(out, p + ".projection_bn", *b.projection_bn);
    }
    push_linear(out, p + ".block_gate", b.block_gate.fc, ParamGroup::gate);
    push_linear(out, p + ".channel_gate", b.channel_gate.fc, ParamGroup::gate);
  }
  push_linear(out, "classifier", net.classifier, ParamGroup::backbone);
  return out;
}

template <typename T>
std::vector<NamedBuffer<T>> buffers(NetworkSpec<T>& net) {
  std::vector<NamedBuffer<T>> out;
  auto push = [&out](const std::string& name, BatchNormParams<T>& b) {
    out.push_back({name + ".running_mean", &b.running_mean});
    out.push_back({name + ".running_var", &b.running_var});
  };
  push("stem_bn", net.stem_bn);
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    auto& b = net.blocks[i];
    const std::string p = "blocks." + std::to_string(i);
    for (std::size_t l = 0; l < b.bns.size(); ++l) push(p + ".bn" + std::to_string(l), b.bns[l]);
    if (b.has_projection()) push(p + ".projection_bn", *b.projection_bn);
  }
  return out;
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("argmax_rows expects (N, K) logits");
  const std::int64_t n = logits.dim(0);
  const std::int64_t k = logits.dim(1);
  const auto d = logits.data();
  std::vector<int> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    int best = 0;
    for (std::int64_t j = 1; j < k; ++j) {
      if (d[i * k + j] > d[i * k + best]) best = static_cast<int>(j);
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

#define LCNET_INSTANTIATE_NETWORK(T)                                                          \
  template struct NetworkSpec<T>;                                                             \
  template NetworkSpec<T> build_network<T>(const ArchitectureSpec&, std::uint64_t);           \
  template ForwardResult<T> network_forward(const Tensor<T>&, NetworkSpec<T>&,                \
                                            const ForwardMode&);                              \
  template ForwardResult<T> network_forward_skipping(const Tensor<T>&, const NetworkSpec<T>&); \
  template Tensor<T> total_loss(const Tensor<T>&, std::span<const int>,                       \
                                std::span<const SalienceTensors<T>>, T);                      \
  template std::vector<NamedParameter<T>> parameters(NetworkSpec<T>&);                        \
  template std::vector<NamedBuffer<T>> buffers(NetworkSpec<T>&);                              \
  template std::vector<int> argmax_rows(const Tensor<T>&);

LCNET_INSTANTIATE_NETWORK(float)
LCNET_INSTANTIATE_NETWORK(double)

}  // namespace lcnet
