#include "lcnet/gating.hpp"

#include <string>

#include "lcnet/error.hpp"

namespace lcnet {

Relu1Mode Relu1Mode::training(double leak) {
  Relu1Mode mode;
  mode.kind = Kind::training_leaky;
  mode.leak = leak;
  mode.validate();
  return mode;
}

void Relu1Mode::validate() const {
  if (leak < 0.0) throw ConfigError("leak", "ReLU-1 leak must be non-negative");
  if (kind == Kind::inference_standard && leak != 0.0) {
    throw ConfigError("leak", "inference ReLU-1 has no leak");
  }
}

template <typename T>
Tensor<T> relu1(const Tensor<T>& x, const Relu1Mode& mode) {
  mode.validate();
  const auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = relu1_value(xd[i], mode);
  const T outside = mode.is_training() ? static_cast<T>(mode.leak) : T(0);
  return detail::make_result<T>(x.shape(), std::move(out), "relu1", {&x},
                                [outside](const detail::GradNode<T>& node, std::span<const T> g) {
                                  const auto xd = node.input_data(0);
                                  auto gx = node.input_grad(0);
                                  for (std::size_t i = 0; i < gx.size(); ++i) {
                                    const bool inside = xd[i] > T(0) && xd[i] <= T(1);
                                    gx[i] += g[i] * (inside ? T(1) : outside);
                                  }
                                });
}

template <typename T>
void GateNet<T>::validate(std::int64_t expected_inputs, std::int64_t expected_outputs) const {
  fc.validate();
  if (in_features() != expected_inputs) {
    throw ShapeError("gate expects " + std::to_string(in_features()) +
                     " input channels, block provides " + std::to_string(expected_inputs));
  }
  if (kind == GateKind::block_gate && out_features() != 1) {
    throw ShapeError("block gate must have exactly one output unit, has " +
                     std::to_string(out_features()));
  }
  if (kind == GateKind::channel_gate && out_features() != expected_outputs) {
    throw ShapeError("channel gate has " + std::to_string(out_features()) +
                     " outputs but gated layer has " + std::to_string(expected_outputs) +
                     " channels");
  }
}

template <typename T>
GateNet<T> make_gate(GateKind kind, std::int64_t in_features, std::int64_t out_features, Rng& rng) {
  if (kind == GateKind::block_gate) out_features = 1;
  GateNet<T> gate;
  gate.kind = kind;
  std::vector<T> w(static_cast<std::size_t>(in_features * out_features));
  for (auto& v : w) v = static_cast<T>(rng.normal(0.0, 0.01));
  gate.fc.weight = Tensor<T>({out_features, in_features}, std::move(w), true);
  gate.fc.bias = Tensor<T>::full({out_features}, T(1), true);
  return gate;
}

template <typename T>
SalienceRecord SalienceTensors<T>::record(std::int64_t instance) const {
  SalienceRecord r;
  r.block_salience = static_cast<double>(block.data()[static_cast<std::size_t>(instance)]);
  const std::int64_t c = channel.dim(1);
  const auto row = channel.data().subspan(static_cast<std::size_t>(instance * c),
                                          static_cast<std::size_t>(c));
  r.channel_salience.assign(row.begin(), row.end());
  return r;
}

template <typename T>
Tensor<T> gate_from_pooled(const Tensor<T>& pooled, const GateNet<T>& gate, const Relu1Mode& mode) {
  if (pooled.rank() != 2 || pooled.dim(1) != gate.in_features()) {
    throw ShapeError("gate input " + shape_to_string(pooled.shape()) + " does not match gate with " +
                     std::to_string(gate.in_features()) + " inputs");
  }
  auto s = relu1(linear(pooled, gate.fc), mode);
  if (gate.kind == GateKind::block_gate) return reshape(s, {pooled.dim(0)});
  return s;
}

template <typename T>
Tensor<T> lnet_forward(const Tensor<T>& x, const GateNet<T>& gate, const Relu1Mode& mode) {
  if (gate.kind != GateKind::block_gate) throw ShapeError("lnet_forward needs a block gate");
  return gate_from_pooled(global_avg_pool(x), gate, mode);
}

template <typename T>
Tensor<T> cnet_forward(const Tensor<T>& x, const GateNet<T>& gate, const Relu1Mode& mode) {
  if (gate.kind != GateKind::channel_gate) throw ShapeError("cnet_forward needs a channel gate");
  return gate_from_pooled(global_avg_pool(x), gate, mode);
}

template <typename T>
Tensor<T> gate_l1_penalty(std::span<const SalienceTensors<T>> gates, T lambda) {
  if (lambda < T(0)) throw ConfigError("lambda", "L1 gate penalty must be non-negative");
  if (lambda == T(0) || gates.empty()) return Tensor<T>::scalar(T(0));
  Tensor<T> total;
  for (const auto& g : gates) {
    auto term = add(sum(abs(g.block)), sum(abs(g.channel)));
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, lambda);
}

#define LCNET_INSTANTIATE_GATING(T)                                                           \
  template Tensor<T> relu1(const Tensor<T>&, const Relu1Mode&);                               \
  template struct GateNet<T>;                                                                 \
  template GateNet<T> make_gate<T>(GateKind, std::int64_t, std::int64_t, Rng&);               \
  template struct SalienceTensors<T>;                                                         \
  template Tensor<T> gate_from_pooled(const Tensor<T>&, const GateNet<T>&, const Relu1Mode&); \
  template Tensor<T> lnet_forward(const Tensor<T>&, const GateNet<T>&, const Relu1Mode&);     \
  template Tensor<T> cnet_forward(const Tensor<T>&, const GateNet<T>&, const Relu1Mode&);     \
  template Tensor<T> gate_l1_penalty(std::span<const SalienceTensors<T>>, T);

LCNET_INSTANTIATE_GATING(float)
LCNET_INSTANTIATE_GATING(double)

}  // namespace lcnet
