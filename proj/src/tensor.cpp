#include "quantart/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace quantart {
namespace {

thread_local bool t_grad_enabled = true;
std::atomic<bool> g_validation{false};

}  // namespace

std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void set_validation(bool on) { g_validation.store(on, std::memory_order_relaxed); }
bool validation_enabled() { return g_validation.load(std::memory_order_relaxed); }

template <class T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (quantart::numel(shape) != values.size())
    throw ShapeError("tensor shape " + to_string(shape) + " holds " +
                     std::to_string(quantart::numel(shape)) + " elements but " +
                     std::to_string(values.size()) + " values were given");
  for (auto e : shape)
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  const auto n = quantart::numel(shape);
  return from(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = quantart::numel(shape);
  return from(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from(Shape{}, std::vector<T>{value}, requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> v(quantart::numel(shape));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return from(std::move(shape), std::move(v), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<T> v(quantart::numel(shape));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return from(std::move(shape), std::move(v), requires_grad);
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() needs a single-element tensor, got " + to_string(shape()));
  return node_->value[0];
}

template <class T>
void Tensor<T>::assign(std::vector<T> values) {
  if (node_->backward) throw std::logic_error("assign() is only valid on leaf tensors");
  if (values.size() != node_->value.size())
    throw ShapeError("assign() size mismatch for tensor " + to_string(shape()));
  node_->value = std::move(values);
}

template <class T>
std::vector<T> Gradients<T>::of(const Tensor<T>& leaf) const {
  auto it = grads_.find(leaf.node().get());
  if (it == grads_.end()) return std::vector<T>(leaf.numel(), T(0));
  return it->second;
}

template <class T>
Gradients<T> backward(const Tensor<T>& loss) {
  using NodeT = detail::Node<T>;
  if (loss.numel() != 1)
    throw ShapeError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));

  Gradients<T> out;
  if (!loss.requires_grad()) return out;

  // Iterative post-order DFS; inputs are visited in recorded order so the
  // traversal (and therefore accumulation order) is deterministic.
  std::vector<NodeT*> order;
  std::unordered_set<const NodeT*> seen;
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodeT* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<const NodeT*, std::vector<T>> grads;
  grads[loss.node().get()] = std::vector<T>(1, T(1));
  std::vector<std::vector<T>*> input_grads;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* node = *it;
    auto git = grads.find(node);
    if (git == grads.end()) continue;
    if (!node->backward) {
      out.grads_[node] = std::move(git->second);
      grads.erase(git);
      continue;
    }
    input_grads.assign(node->inputs.size(), nullptr);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      NodeT* in = node->inputs[i].get();
      if (!in->requires_grad) continue;
      auto& slot = grads[in];
      if (slot.empty()) slot.assign(in->value.size(), T(0));
      input_grads[i] = &slot;
    }
    // grads may rehash above, so re-find this node's gradient
    const std::vector<T> g = std::move(grads[node]);
    grads.erase(node);
    node->backward(*node, g, input_grads);
  }
  return out;
}

template class Tensor<float>;
template class Tensor<double>;
template class Gradients<float>;
template class Gradients<double>;
template Gradients<float> backward(const Tensor<float>&);
template Gradients<double> backward(const Tensor<double>&);

}  // namespace quantart
