#include "slk/optim.hpp"

#include <algorithm>
#include <cmath>

namespace slk {

Adam::Adam(std::vector<Var> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    if (!p.requires_grad()) throw ValidationError("Adam parameters must require gradients");
    m_.emplace_back(p.shape(), 0.0);
    v_.emplace_back(p.shape(), 0.0);
  }
}

double Adam::lr_at(int t) const {
  if (cfg_.warmup <= 0) return cfg_.lr;
  return cfg_.lr * std::min(1.0, static_cast<double>(t) / cfg_.warmup);
}

void Adam::step() {
  ++t_;
  const double lr = lr_at(t_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Node& node = *params_[k].node();
    const NdArray g = params_[k].grad();
    NdArray& m = m_[k];
    NdArray& v = v_[k];
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * g[i] * g[i];
      node.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace slk
