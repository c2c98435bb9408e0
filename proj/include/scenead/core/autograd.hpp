#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "scenead/core/tensor.hpp"

namespace scenead {

// Reverse-mode autodiff over whole tensors. Every op records a closure that
// maps the output gradient onto its parents' gradients; leaves with
// requires_grad accumulate.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Tensor<T>& g) {
    if (grad.empty()) {
      grad = g;
    } else {
      grad += g;
    }
  }
  Tensor<T>& grad_or_zero() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  // Builds an op result. The backward closure is dropped when no parent
  // needs a gradient, so frozen subgraphs cost nothing to keep around.
  static Var make(Tensor<T> value, std::vector<Var> parents, std::function<void(Node<T>&)> fn) {
    Var out(std::move(value));
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      out.node_->requires_grad = true;
      out.node_->backward_fn = std::move(fn);
      out.node_->parents.reserve(parents.size());
      for (auto& p : parents) out.node_->parents.push_back(p.node_);
    }
    return out;
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  void zero_grad() const { node_->grad = Tensor<T>(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  void set_requires_grad(bool r) const { node_->requires_grad = r; }
  const Shape& shape() const { return node_->value.shape(); }
  Node<T>* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const noexcept { return node_; }

  // A leaf that shares this value but is cut off from the graph.
  Var detached() const { return Var(node_->value, false); }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Runs reverse accumulation from `root` seeded with `seed` (same shape as the
// root value). Intermediate gradients are released as soon as they have been
// propagated; leaf gradients are kept.
template <typename T>
void backward(const Var<T>& root, const Tensor<T>& seed) {
  if (!root.requires_grad()) return;
  if (seed.shape() != root.shape())
    throw ShapeError("backward seed " + shape_str(seed.shape()) + " vs root " +
                     shape_str(root.shape()));

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node<T>* p = n->parents[idx++].get();
      if (p && p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root.node()->accumulate(seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (!n->backward_fn || n->grad.empty()) continue;
    n->backward_fn(*n);
    n->grad = Tensor<T>();
  }
}

// Convenience for scalar roots.
template <typename T>
void backward(const Var<T>& root) {
  backward(root, Tensor<T>::ones(root.shape()));
}

}  // namespace scenead
