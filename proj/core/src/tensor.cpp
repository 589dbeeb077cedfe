#include "lcnet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

#include "lcnet/error.hpp"

namespace lcnet {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto extent : shape) {
    if (extent < 0) throw ShapeError("negative extent in shape " + shape_to_string(shape));
    n *= extent;
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace {

thread_local bool tls_grad_enabled = true;
std::atomic<std::uint64_t> node_counter{0};

}  // namespace

bool grad_enabled() noexcept { return tls_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(tls_grad_enabled) { tls_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { tls_grad_enabled = previous_; }

namespace detail {

template <typename T>
std::span<T> GradNode<T>::input_grad(std::size_t i) const {
  if (!inputs.at(i)) return {};
  auto& in = *inputs[i];
  if (!in.requires_grad) return {};
  if (in.grad.empty()) in.grad.assign(in.data.size(), T(0));
  return in.grad;
}

template <typename T>
std::span<const T> GradNode<T>::input_data(std::size_t i) const {
  return inputs.at(i)->data;
}

template <typename T>
const Shape& GradNode<T>::input_shape(std::size_t i) const {
  return inputs.at(i)->shape;
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::string_view op,
                      std::initializer_list<const Tensor<T>*> inputs,
                      typename GradNode<T>::BackwardFn backward) {
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  bool record = false;
  if (grad_enabled()) {
    for (const auto* in : inputs) record = record || (in->defined() && in->requires_grad());
  }
  if (record) {
    auto node = std::make_shared<GradNode<T>>();
    node->sequence = node_counter.fetch_add(1, std::memory_order_relaxed);
    node->op = op;
    for (const auto* in : inputs) node->inputs.push_back(in->impl());
    node->backward = std::move(backward);
    node->output = impl.get();
    impl->requires_grad = true;
    impl->grad_fn = std::move(node);
  }
  return Tensor<T>(std::move(impl));
}

}  // namespace detail

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl<T>>()) {
  const auto n = shape_numel(shape);
  if (static_cast<std::size_t>(n) != data.size()) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_to_string(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
detail::TensorImpl<T>& Tensor<T>::checked() const {
  if (!impl_) throw Error("use of an undefined tensor");
  return *impl_;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return checked().shape;
}

template <typename T>
std::int64_t Tensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_to_string(s));
  }
  return s[axis];
}

template <typename T>
std::int64_t Tensor<T>::numel() const {
  return static_cast<std::int64_t>(checked().data.size());
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  return checked().data;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  auto& impl = checked();
  if (impl.grad_fn) throw AutogradError("mutable_data() on a non-leaf tensor");
  return impl.data;
}

template <typename T>
T Tensor<T>::item() const {
  auto& impl = checked();
  if (impl.data.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_to_string(impl.shape));
  }
  return impl.data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::int64_t> index) const {
  auto& impl = checked();
  if (index.size() != impl.shape.size()) {
    throw ShapeError("index rank does not match shape " + shape_to_string(impl.shape));
  }
  std::int64_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i < 0 || i >= impl.shape[axis]) {
      throw ShapeError("index out of range for shape " + shape_to_string(impl.shape));
    }
    flat = flat * impl.shape[axis] + i;
    ++axis;
  }
  return impl.data[static_cast<std::size_t>(flat)];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return checked().requires_grad;
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool value) {
  auto& impl = checked();
  if (impl.grad_fn) throw AutogradError("set_requires_grad() on a non-leaf tensor");
  impl.requires_grad = value;
  return *this;
}

template <typename T>
bool Tensor<T>::is_leaf() const {
  return checked().grad_fn == nullptr;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return !checked().grad.empty();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  return checked().grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  auto& impl = checked();
  std::fill(impl.grad.begin(), impl.grad.end(), T(0));
}

template <typename T>
bool Tensor<T>::all_finite() const {
  const auto& d = checked().data;
  return std::all_of(d.begin(), d.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
void Tensor<T>::backward() const {
  auto& root = checked();
  if (root.data.size() != 1) {
    throw AutogradError("backward() requires a scalar loss, got shape " +
                        shape_to_string(root.shape));
  }
  if (!root.grad_fn) {
    if (!root.requires_grad) throw AutogradError("backward() on a tensor without gradient");
    if (root.grad.empty()) root.grad.assign(1, T(0));
    root.grad[0] += T(1);
    return;
  }
  if (root.grad_fn->consumed) throw AutogradError("backward() on an already consumed tape");

  using Node = detail::GradNode<T>;
  std::vector<std::shared_ptr<Node>> nodes;
  std::unordered_set<const Node*> seen;
  std::vector<std::shared_ptr<Node>> stack{root.grad_fn};
  seen.insert(root.grad_fn.get());
  while (!stack.empty()) {
    auto node = std::move(stack.back());
    stack.pop_back();
    if (node->consumed) throw AutogradError("backward() reaches an already consumed tape");
    for (const auto& in : node->inputs) {
      if (in && in->grad_fn && seen.insert(in->grad_fn.get()).second) stack.push_back(in->grad_fn);
    }
    nodes.push_back(std::move(node));
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const auto& a, const auto& b) { return a->sequence > b->sequence; });

  root.grad.assign(1, T(1));
  for (const auto& node : nodes) {
    auto& out = *node->output;
    if (!out.grad.empty()) node->backward(*node, out.grad);
    if (&out != &root) {
      out.grad.clear();
      out.grad.shrink_to_fit();
    }
  }
  for (const auto& node : nodes) {
    node->consumed = true;
    node->backward = nullptr;
    node->inputs.clear();
  }
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  auto& impl = checked();
  return Tensor(impl.shape, impl.data, false);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  auto& impl = checked();
  return Tensor(impl.shape, impl.data, impl.requires_grad && !impl.grad_fn);
}

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                     " vs " + shape_to_string(b.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  const auto x = a.data();
  const auto y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return detail::make_result<T>(a.shape(), std::move(out), "add", {&a, &b},
                                [](const detail::GradNode<T>& node, std::span<const T> g) {
                                  for (std::size_t k = 0; k < 2; ++k) {
                                    auto gk = node.input_grad(k);
                                    for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += g[i];
                                  }
                                });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  const auto x = a.data();
  const auto y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return detail::make_result<T>(a.shape(), std::move(out), "sub", {&a, &b},
                                [](const detail::GradNode<T>& node, std::span<const T> g) {
                                  auto ga = node.input_grad(0);
                                  for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                                  auto gb = node.input_grad(1);
                                  for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
                                });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  const auto x = a.data();
  const auto y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return detail::make_result<T>(a.shape(), std::move(out), "mul", {&a, &b},
                                [](const detail::GradNode<T>& node, std::span<const T> g) {
                                  const auto x = node.input_data(0);
                                  const auto y = node.input_data(1);
                                  auto ga = node.input_grad(0);
                                  for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * y[i];
                                  auto gb = node.input_grad(1);
                                  for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * x[i];
                                });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  const auto x = a.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return detail::make_result<T>(a.shape(), std::move(out), "scale", {&a},
                                [factor](const detail::GradNode<T>& node, std::span<const T> g) {
                                  auto ga = node.input_grad(0);
                                  for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * factor;
                                });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
  const auto x = a.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(x[i]);
  return detail::make_result<T>(a.shape(), std::move(out), "abs", {&a},
                                [](const detail::GradNode<T>& node, std::span<const T> g) {
                                  const auto x = node.input_data(0);
                                  auto ga = node.input_grad(0);
                                  for (std::size_t i = 0; i < ga.size(); ++i) {
                                    const T sign = x[i] > T(0) ? T(1) : (x[i] < T(0) ? T(-1) : T(0));
                                    ga[i] += g[i] * sign;
                                  }
                                });
}

template <typename T>
Tensor<T> broadcast_mul(const Tensor<T>& x, const Tensor<T>& s) {
  const auto& xs = x.shape();
  const auto& ss = s.shape();
  if (ss.size() > xs.size() || !std::equal(ss.begin(), ss.end(), xs.begin())) {
    throw ShapeError("broadcast_mul: " + shape_to_string(ss) + " is not a leading prefix of " +
                     shape_to_string(xs));
  }
  const auto outer = static_cast<std::size_t>(s.numel());
  const auto inner = outer == 0 ? std::size_t{0} : static_cast<std::size_t>(x.numel()) / outer;
  const auto xd = x.data();
  const auto sd = s.data();
  std::vector<T> out(xd.size());
  for (std::size_t p = 0; p < outer; ++p) {
    const T factor = sd[p];
    for (std::size_t i = 0; i < inner; ++i) out[p * inner + i] = xd[p * inner + i] * factor;
  }
  return detail::make_result<T>(
      xs, std::move(out), "broadcast_mul", {&x, &s},
      [outer, inner](const detail::GradNode<T>& node, std::span<const T> g) {
        const auto xd = node.input_data(0);
        const auto sd = node.input_data(1);
        auto gx = node.input_grad(0);
        if (!gx.empty()) {
          for (std::size_t p = 0; p < outer; ++p)
            for (std::size_t i = 0; i < inner; ++i) gx[p * inner + i] += g[p * inner + i] * sd[p];
        }
        auto gs = node.input_grad(1);
        if (!gs.empty()) {
          for (std::size_t p = 0; p < outer; ++p) {
            T acc = 0;
            for (std::size_t i = 0; i < inner; ++i) acc += g[p * inner + i] * xd[p * inner + i];
            gs[p] += acc;
          }
        }
      });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = 0;
  for (T v : a.data()) total += v;
  return detail::make_result<T>(Shape{}, std::vector<T>{total}, "sum", {&a},
                                [](const detail::GradNode<T>& node, std::span<const T> g) {
                                  auto ga = node.input_grad(0);
                                  for (auto& v : ga) v += g[0];
                                });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  const auto n = a.numel();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  T total = 0;
  for (T v : a.data()) total += v;
  const T inv = T(1) / static_cast<T>(n);
  return detail::make_result<T>(Shape{}, std::vector<T>{total * inv}, "mean", {&a},
                                [inv](const detail::GradNode<T>& node, std::span<const T> g) {
                                  auto ga = node.input_grad(0);
                                  for (auto& v : ga) v += g[0] * inv;
                                });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_to_string(a.shape()) + " as " +
                     shape_to_string(shape));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  return detail::make_result<T>(std::move(shape), std::move(out), "reshape", {&a},
                                [](const detail::GradNode<T>& node, std::span<const T> g) {
                                  auto ga = node.input_grad(0);
                                  for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                                });
}

#define LCNET_INSTANTIATE_TENSOR(T)                                                           \
  template struct detail::GradNode<T>;                                                        \
  template class Tensor<T>;                                                                   \
  template Tensor<T> detail::make_result<T>(Shape, std::vector<T>, std::string_view,          \
                                            std::initializer_list<const Tensor<T>*>,          \
                                            typename detail::GradNode<T>::BackwardFn);        \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> scale(const Tensor<T>&, T);                                              \
  template Tensor<T> abs(const Tensor<T>&);                                                   \
  template Tensor<T> broadcast_mul(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> sum(const Tensor<T>&);                                                   \
  template Tensor<T> mean(const Tensor<T>&);                                                  \
  template Tensor<T> reshape(const Tensor<T>&, Shape);

LCNET_INSTANTIATE_TENSOR(float)
LCNET_INSTANTIATE_TENSOR(double)

}  // namespace lcnet
