#pragma once
// Dense tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle to an immutable node holding a shape and a flat
// row-major value array. Ops build a graph by recording their inputs and a
// backward rule; backward() walks that graph once in reverse topological
// order. The only mutation path is Tensor::assign on leaf tensors, used by the
// optimizer between steps.

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "quantart/error.hpp"

namespace quantart {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::string to_string(const Shape& s);

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

// Recording of autodiff graphs is enabled per thread. NoGradGuard disables it
// for the lifetime of the guard (inference, metric evaluation, frozen stages).
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// When enabled, every op output is checked for NaN/Inf.
void set_validation(bool on);
bool validation_enabled();

namespace detail {

template <class T>
struct Node {
  using BackwardFn = std::function<void(const Node& self, const std::vector<T>& grad,
                                        std::vector<std::vector<T>*>& input_grads)>;
  Shape shape;
  std::vector<T> value;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
  const char* op = "leaf";
};

}  // namespace detail

template <class T>
class Tensor {
 public:
  using Scalar = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);
  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }
  std::span<const T> data() const { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }
  T item() const;
  T operator[](std::size_t i) const { return node_->value[i]; }
  bool requires_grad() const { return node_->requires_grad; }
  const char* op() const { return node_->op; }
  const NodePtr& node() const { return node_; }

  // New leaf with the same value, cut from any graph.
  Tensor detach(bool requires_grad = false) const { return from(shape(), values(), requires_grad); }

  // Replaces the value of a leaf in place. Shape must be unchanged.
  void assign(std::vector<T> values);

  template <class U>
  Tensor<U> cast(bool requires_grad = false) const {
    std::vector<U> v(numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<U>(node_->value[i]);
    return Tensor<U>::from(shape(), std::move(v), requires_grad);
  }

 private:
  NodePtr node_;
};

// Gradients of a scalar loss with respect to every requires_grad leaf that
// is reachable from it.
template <class T>
class Gradients {
 public:
  // Zero-filled when the leaf did not influence the loss.
  std::vector<T> of(const Tensor<T>& leaf) const;
  bool contains(const Tensor<T>& leaf) const { return grads_.count(leaf.node().get()) != 0; }
  std::size_t size() const { return grads_.size(); }

 private:
  template <class U>
  friend Gradients<U> backward(const Tensor<U>& loss);
  std::unordered_map<const detail::Node<T>*, std::vector<T>> grads_;
};

// Throws ShapeError when loss is not a single-element tensor.
template <class T>
Gradients<T> backward(const Tensor<T>& loss);

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace quantart
