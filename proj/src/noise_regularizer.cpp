#include "slk/noise_regularizer.hpp"

#include <algorithm>
#include <cmath>

#include "slk/ops.hpp"

namespace slk {

Var noise_reg_loss(const std::vector<Var>& maps) {
  Var total = Var::constant(NdArray::scalar(0.0));
  for (const Var& m : maps) {
    const int nd = m.value().ndim();
    if (nd != 2 && nd != 3) throw ValidationError("noise map must be [H,W] or [B,H,W], got " + shape_str(m.shape()));
    Var n = m;
    while (std::min(n.shape()[nd - 2], n.shape()[nd - 1]) >= 8) {
      // mean over the spatial axes, squared, summed over the batch
      const std::vector<int> axes{nd - 2, nd - 1};
      Var a = mean_over(mul(n, roll(n, 1, nd - 1)), axes);
      Var b = mean_over(mul(n, roll(n, 1, nd - 2)), axes);
      total = add(total, add(sum_all(pow2(a)), sum_all(pow2(b))));
      n = avg_pool2(n);
    }
  }
  return total;
}

double noise_reg_loss(const std::vector<NdArray>& maps) {
  NoGradGuard guard;
  std::vector<Var> vs;
  for (const auto& m : maps) vs.push_back(Var::constant(m));
  return noise_reg_loss(vs).value().item();
}

namespace {

void standardize_block(double* p, std::size_t n, std::mt19937_64& rng) {
  double m = 0;
  for (std::size_t i = 0; i < n; ++i) m += p[i];
  m /= static_cast<double>(n);
  double v = 0;
  for (std::size_t i = 0; i < n; ++i) v += (p[i] - m) * (p[i] - m);
  const double sd = std::sqrt(v / static_cast<double>(n));
  if (sd < 1e-12) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) p[i] = normal(rng);
    if (n > 1) standardize_block(p, n, rng);
    return;
  }
  for (std::size_t i = 0; i < n; ++i) p[i] = (p[i] - m) / sd;
}

}  // namespace

NdArray standardize_noise(const NdArray& map, std::mt19937_64& rng) {
  if (map.ndim() < 2) throw ValidationError("noise map must have rank >= 2, got " + shape_str(map.shape()));
  NdArray out = map;
  const std::size_t hw = static_cast<std::size_t>(map.dim(-2)) * map.dim(-1);
  for (std::size_t off = 0; off < out.size(); off += hw) standardize_block(out.data().data() + off, hw, rng);
  return out;
}

void standardize_noise(std::vector<NdArray>& maps, std::mt19937_64& rng) {
  for (auto& m : maps) m = standardize_noise(m, rng);
}

}  // namespace slk
