#pragma once

// Dense row-major tensors with tape-free reverse-mode differentiation.
//
// A Tensor is a cheap handle to a shared Node. Every op that sees at least one
// input with requires_grad records its parents and a backward closure on the
// result node; backward() walks the resulting DAG in reverse topological order.
// The graph is released when the last handle to the loss goes away.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mvclip/errors.hpp"

namespace mvclip {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace debug {

inline bool& check_finite_flag() {
  thread_local bool enabled = false;
  return enabled;
}

// Opt-in per-op NaN/Inf scan. Off by default.
inline void set_check_finite(bool on) { check_finite_flag() = on; }
inline bool check_finite() { return check_finite_flag(); }

// RAII toggle for the finite scan.
class FiniteGuard {
 public:
  explicit FiniteGuard(bool on = true) : previous_(check_finite()) { set_check_finite(on); }
  ~FiniteGuard() { set_check_finite(previous_); }
  FiniteGuard(const FiniteGuard&) = delete;
  FiniteGuard& operator=(const FiniteGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace debug

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

inline bool grad_enabled() { return grad_mode_flag(); }

// Disables graph recording in its scope (evaluation passes).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(grad_enabled()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    validate_shape(shape);
    node_->data.assign(numel_of(shape), fill);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    validate_shape(shape);
    if (numel_of(shape) != data.size()) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    }
    node_->data = std::move(data);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
  }

  static Tensor from_node(std::shared_ptr<Node<T>> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  std::vector<T>& storage() { return node_->data; }
  const std::vector<T>& storage() const { return node_->data; }

  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }

  T& operator()(std::size_t i, std::size_t j) { return node_->data[i * node_->shape[1] + j]; }
  T operator()(std::size_t i, std::size_t j) const { return node_->data[i * node_->shape[1] + j]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return node_->grad.size() == node_->data.size(); }

  // Gradient accumulated by backward(); zeros when this tensor was not on the path.
  std::span<const T> grad() const { return node_->ensure_grad(); }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  // Value copy with no graph attached.
  Tensor detach() const { return Tensor(shape(), node_->data, false); }

  const char* op_name() const { return node_->op; }
  const std::shared_ptr<Node<T>>& impl() const { return node_; }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  static void validate_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
    for (auto e : shape) {
      if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
  }

  std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
void scan_finite(const Node<T>& node) {
  for (const T& v : node.data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by op '") + node.op + "'");
    }
  }
}

// Builds an op result. The backward closure is attached only when some parent
// participates in differentiation.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      std::vector<Tensor<T>> parents, std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->op = op;
  node->shape = std::move(shape);
  node->data = std::move(data);
  const bool needs_grad = grad_enabled() && std::any_of(parents.begin(), parents.end(),
                                                        [](const Tensor<T>& p) { return p.requires_grad(); });
  if (needs_grad) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.impl());
    node->backward = std::move(backward);
  }
  if (debug::check_finite()) scan_finite(*node);
  return Tensor<T>::from_node(std::move(node));
}

}  // namespace detail

// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
// requires_grad node reachable from the loss, so call zero_grad() on leaves
// between steps.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.impl().get(), 0);
  visited.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.impl()->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && node->grad.size() == node->data.size()) node->backward(*node);
  }
  // Interior grads are dead weight once propagated.
  for (Node<T>* node : order) {
    if (!node->parents.empty()) node->grad.clear();
  }
}

}  // namespace mvclip
