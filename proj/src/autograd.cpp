#include "slk/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace slk {

namespace {
thread_local bool g_grad_enabled = true;
}

NdArray& Node::grad_buffer() {
  if (grad.shape() != value.shape()) grad = NdArray(value.shape(), 0.0);
  return grad;
}

Var::Var(NdArray value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

NdArray Var::grad() const {
  if (node_->grad.shape() != node_->value.shape()) return NdArray(node_->value.shape(), 0.0);
  return node_->grad;
}

void Var::zero_grad() {
  if (node_) node_->grad = NdArray();
}

Var make_result(NdArray value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    const bool any = std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (auto& p : parents) node->parents.push_back(p.node());
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  if (root.value().size() != 1) {
    throw ValidationError("backward() needs a scalar root, got shape " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && node->grad.shape() == node->value.shape()) node->backward_fn(*node);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

double grad_check(const std::function<Var(const Var&)>& f, const NdArray& x, double h) {
  Var xv = Var::param(x);
  Var y = f(xv);
  if (y.value().size() != 1) throw ValidationError("grad_check needs a scalar-valued function");
  if (!std::isfinite(y.value()[0])) throw NumericalError("grad_check: f(x) is not finite");
  backward(y);
  const NdArray analytic = xv.grad();

  NoGradGuard guard;
  double worst = 0.0;
  NdArray probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(Var::constant(probe)).value()[0];
    probe[i] = orig - h;
    const double fm = f(Var::constant(probe)).value()[0];
    probe[i] = orig;
    const double fd = (fp - fm) / (2.0 * h);
    const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace slk
