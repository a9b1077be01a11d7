#pragma once

#include <vector>

#include "slk/autograd.hpp"

namespace slk {

struct AdamConfig {
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int warmup = 0;  // linear ramp lr * min(1, t / warmup), t counted from 1
};

// Adam over a fixed set of leaf Vars; step() reads their gradients and writes new values in place.
class Adam {
 public:
  Adam(std::vector<Var> params, AdamConfig cfg);

  double lr_at(int t) const;
  void step();
  void zero_grad();
  int steps() const { return t_; }

 private:
  std::vector<Var> params_;
  AdamConfig cfg_;
  std::vector<NdArray> m_;
  std::vector<NdArray> v_;
  int t_ = 0;
};

}  // namespace slk
