#pragma once

#include <random>

#include "slk/generator.hpp"

namespace slk::test {

inline NdArray randn(Shape s, std::mt19937_64& rng, double sd = 1.0) { return NdArray::randn(std::move(s), rng, sd); }

inline NdArray uniform(Shape s, std::mt19937_64& rng, double lo, double hi) {
  NdArray a(std::move(s));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : a.data()) v = u(rng);
  return a;
}

inline int rand_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// A smaller generator for tests that train: 3 blocks, 16x16 output.
inline GeneratorConfig small_config() {
  GeneratorConfig cfg;
  cfg.latent_dim = 16;
  cfg.num_blocks = 3;
  cfg.channels = {16, 16, 8};
  return cfg;
}

}  // namespace slk::test
