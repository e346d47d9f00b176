// Reverse-mode automatic differentiation over Tensor values.
//
// Every differentiable op produces a Var whose node remembers its inputs and a
// closure that pushes the node's gradient into them. Calling backward() on a
// scalar Var walks the recorded graph in reverse topological order.
#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "srcyc/tensor.hpp"

namespace srcyc {

namespace detail {
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  // Lazily allocated gradient buffer, same shape as value.
  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <class T>
class Var {
 public:
  using NodePtr = std::shared_ptr<Node<T>>;

  Var() : node_(std::make_shared<Node<T>>()) {}

  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Var constant(Tensor<T> value) { return Var(std::move(value), false); }
  static Var parameter(Tensor<T> value) { return Var(std::move(value), true); }

  const Tensor<T>& value() const noexcept { return node_->value; }
  Tensor<T>& mutable_value() noexcept { return node_->value; }
  const Shape& shape() const noexcept { return node_->value.shape(); }
  const Tensor<T>& grad() const noexcept { return node_->grad; }
  Tensor<T>& mutable_grad() { return node_->grad_buffer(); }
  bool requires_grad() const noexcept { return node_->requires_grad; }
  void set_requires_grad(bool on) noexcept { node_->requires_grad = on; }
  T item() const { return node_->value.item(); }

  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(T(0));
  }

  Var detach() const { return Var(node_->value, false); }

  const NodePtr& node() const noexcept { return node_; }

  /// Back-propagates d(this)/d(leaf) into every reachable leaf that requires a
  /// gradient. The Var must hold a single element.
  void backward() const {
    if (node_->value.size() != 1) throw ShapeError("backward() requires a scalar output");
    if (!node_->requires_grad) return;

    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->inputs.size()) {
        Node<T>* child = n->inputs[next++].get();
        if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }

    node_->grad_buffer().fill(T(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* n = *it;
      if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
    // Interior gradients are not needed after the sweep.
    for (Node<T>* n : order)
      if (n->backward_fn) n->grad = Tensor<T>();
  }

 private:
  explicit Var(NodePtr node) : node_(std::move(node)) {}
  template <class U, class F>
  friend Var<U> make_op(Tensor<U> value, std::vector<Var<U>> inputs, F&& backward);

  NodePtr node_;
};

/// Builds an op result. The backward closure receives (node) and must add its
/// contributions into inputs[i]->grad_buffer() for inputs that require grad.
template <class T, class F>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs, F&& backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  bool needs = false;
  if (grad_enabled())
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward_fn = std::forward<F>(backward);
  }
  return Var<T>(std::move(node));
}

}  // namespace srcyc
