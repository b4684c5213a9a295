#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "xview/tensor.hpp"

namespace xview {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// Reverse-mode graph node. `backward_fn` reads `grad` and accumulates into
/// the gradients of `inputs`.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backward_fn;

  /// Gradient buffer, allocated as zeros on first use.
  Tensor& grad_buffer();
};

/// Handle to a value in the autograd graph. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  /// Leaf holding `value`; parameters pass requires_grad = true.
  static Var leaf(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int axis) const { return node_->value.dim(axis); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const Tensor& grad() const { return node_->grad; }
  Tensor& grad_buffer() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = Tensor(); }

  /// New leaf sharing no graph history.
  Var detach() const { return leaf(node_->value, false); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Build a graph node from `value`. If gradient recording is off or no
/// input requires grad, the result is a constant leaf and `fn` is dropped.
Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> fn);

/// Backpropagate from a scalar (single-element) root with seed gradient 1.
void backward(const Var& root);

bool grad_enabled();

/// Disables graph recording in the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace xview
