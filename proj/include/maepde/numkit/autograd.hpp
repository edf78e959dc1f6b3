#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "maepde/numkit/tensor.hpp"

namespace maepde::numkit {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the reverse-mode tape. Interior nodes own a backward closure
/// that reads `grad` and accumulates into the parents' grads.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  /// Gradient buffer, zero-allocated on first use.
  Tensor& grad_buffer();
};

/// Handle to a tape node. Cheap to copy; copies alias the same node.
///
/// A tape is built implicitly by calling the ops in ops.hpp and is owned by
/// whoever holds the root Var. Tapes are single-owner: two threads must never
/// run backward over graphs that share an interior node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t i) const { return node_->value.dim(i); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  const NodePtr& node() const { return node_; }

  /// Reverse sweep from this node. The value must hold a single element;
  /// its seed gradient is `seed`.
  void backward(double seed = 1.0) const;

 private:
  NodePtr node_;
};

/// Trainable leaf. The node persists across passes so gradients from several
/// backward sweeps accumulate until zero_grad().
class Parameter {
 public:
  Parameter();
  explicit Parameter(Tensor init, bool trainable = true);

  Parameter(const Parameter&) = delete;
  Parameter& operator=(const Parameter&) = delete;
  Parameter(Parameter&&) = default;
  Parameter& operator=(Parameter&&) = default;

  Var var() const { return Var(node_); }
  Tensor& value() { return node_->value; }
  const Tensor& value() const { return node_->value; }
  Tensor& grad() { return node_->grad_buffer(); }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }

  bool trainable() const { return node_->requires_grad; }
  void set_trainable(bool on) { node_->requires_grad = on; }
  void zero_grad();

 private:
  NodePtr node_;
};

/// Disables tape recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Builds an op result. When recording is on and any parent requires grad,
/// the node keeps its parents and `fn`; otherwise it is a constant leaf.
/// The value is checked for NaN/Inf and an error names `op`.
Var make_result(const char* op, Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn);

}  // namespace maepde::numkit
