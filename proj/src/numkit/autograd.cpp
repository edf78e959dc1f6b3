#include "maepde/numkit/autograd.hpp"

#include <unordered_set>

namespace maepde::numkit {
namespace {
thread_local bool recording = true;
}

Tensor& Node::grad_buffer() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::backward(double seed) const {
  if (!node_) throw NumkitError("backward on an undefined Var");
  if (node_->value.size() != 1) {
    throw NumkitError("backward needs a single-element root, got " + shape_str(node_->value.shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order of the recorded nodes.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.shape() == n->value.shape()) n->backward_fn(*n);
  }
}

Parameter::Parameter() : node_(std::make_shared<Node>()) { node_->requires_grad = true; }

Parameter::Parameter(Tensor init, bool trainable) : node_(std::make_shared<Node>()) {
  node_->value = std::move(init);
  node_->requires_grad = trainable;
}

void Parameter::zero_grad() {
  node_->grad_buffer().fill(0.0);
}

NoGradGuard::NoGradGuard() : previous_(recording) { recording = false; }
NoGradGuard::~NoGradGuard() { recording = previous_; }

bool grad_enabled() { return recording; }

Var make_result(const char* op, Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  value.check_finite(op);
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  if (recording) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (const auto& p : parents) node->parents.push_back(p.node());
      node->backward_fn = std::move(fn);
    }
  }
  return Var(std::move(node));
}

}  // namespace maepde::numkit
