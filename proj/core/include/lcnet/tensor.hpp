#pragma once

// Dense NCHW tensors with a reverse-mode gradient tape.
//
// A Tensor is a shared handle: copies alias the same storage. Operations never mutate their
// inputs; the only in-place changes are gradient accumulation and parameter updates on leaves
// through mutable_data(). Each op whose inputs require gradients records a GradNode; the
// backward pass replays recorded nodes in reverse creation order, which is a valid topological
// order because a node can only consume tensors created before it.

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lcnet {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

template <typename T>
class Tensor;

namespace detail {

template <typename T>
struct TensorImpl;

template <typename T>
struct GradNode {
  // Receives the gradient of the node output and accumulates into input gradients.
  using BackwardFn = std::function<void(const GradNode&, std::span<const T>)>;

  std::uint64_t sequence = 0;
  std::string_view op;
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  BackwardFn backward;
  TensorImpl<T>* output = nullptr;  // non-owning; the output owns this node
  bool consumed = false;

  // Gradient buffer of input i (zero-initialised on first use). Empty if that input does not
  // require gradients.
  std::span<T> input_grad(std::size_t i) const;
  std::span<const T> input_data(std::size_t i) const;
  const Shape& input_shape(std::size_t i) const;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::shared_ptr<GradNode<T>> grad_fn;
};

}  // namespace detail

// Thread-local switch for tape recording.
bool grad_enabled() noexcept;

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<detail::TensorImpl<T>> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::int64_t dim(std::size_t axis) const;
  std::int64_t numel() const;

  std::span<const T> data() const;
  // Writable view for leaf tensors (parameters, inputs). Throws on tape outputs.
  std::span<T> mutable_data();
  T item() const;
  T at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const T> grad() const;
  void zero_grad();

  bool all_finite() const;

  // Populates grad of every requires_grad leaf reachable from this scalar; consumes the tape.
  void backward() const;

  // Same storage copy cut from the tape.
  Tensor detach() const;
  Tensor clone() const;

  const std::shared_ptr<detail::TensorImpl<T>>& impl() const { return impl_; }

 private:
  detail::TensorImpl<T>& checked() const;

  std::shared_ptr<detail::TensorImpl<T>> impl_;
};

namespace detail {

// Wraps a freshly computed result, recording a tape node if any input requires gradients
// and recording is enabled.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::string_view op,
                      std::initializer_list<const Tensor<T>*> inputs,
                      typename GradNode<T>::BackwardFn backward);

}  // namespace detail

// Elementwise ops on identically shaped tensors.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> abs(const Tensor<T>& a);

// Multiplies x by s, where s.shape() is a leading prefix of x.shape(); each entry of s scales
// the trailing block it indexes. A (N, C) salience against an (N, C, H, W) map scales whole
// channels; an (N) salience scales whole instances.
template <typename T>
Tensor<T> broadcast_mul(const Tensor<T>& x, const Tensor<T>& s);

template <typename T>
Tensor<T> sum(const Tensor<T>& a);
template <typename T>
Tensor<T> mean(const Tensor<T>& a);
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, b);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
  return sub(a, b);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
  return mul(a, b);
}

}  // namespace lcnet
