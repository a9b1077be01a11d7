#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "slk/ndarray.hpp"

namespace slk {

// One value in a reverse-mode graph. Gradients accumulate by summation.
struct Node {
  NdArray value;
  NdArray grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  // Zero-initialized gradient buffer shaped like value.
  NdArray& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(NdArray value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(NdArray value) { return Var(std::move(value), false); }
  static Var param(NdArray value) { return Var(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  const NdArray& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  // Gradient after backward(); zeros when nothing reached this node.
  NdArray grad() const;
  void zero_grad();

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Builds a result node. The backward function is dropped when no parent
// requires a gradient or when gradient recording is disabled.
Var make_result(NdArray value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

// Reverse sweep from a scalar root (seed 1), visiting each node once in
// reverse topological order.
void backward(const Var& root);

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

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
double grad_check(const std::function<Var(const Var&)>& f, const NdArray& x, double h = 1e-5);

}  // namespace slk
