#pragma once

#include <random>
#include <vector>

#include "slk/autograd.hpp"

namespace slk {

// Per map: while min(H,W) >= 8, add mean(n * roll_w(n))^2 + mean(n * roll_h(n))^2,
// then 2x2 average-pool. Maps are [H,W] or batched [B,H,W] (each sample summed).
Var noise_reg_loss(const std::vector<Var>& maps);
double noise_reg_loss(const std::vector<NdArray>& maps);

// Zero mean, unit population std per map (per sample for batched maps).
// Maps with std < 1e-12 are redrawn from N(0,1) instead.
void standardize_noise(std::vector<NdArray>& maps, std::mt19937_64& rng);
NdArray standardize_noise(const NdArray& map, std::mt19937_64& rng);

}  // namespace slk
