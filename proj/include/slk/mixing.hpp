#pragma once

#include <vector>

#include "slk/latent_rep.hpp"

namespace slk {

// Throws unless mask is [H,W] with entries in [0,1].
void check_mask(const NdArray& mask);

// out = v1 + m * (v2 - v1); v1, v2 are [..., H, W], mask [H,W].
NdArray masked_mix(const NdArray& v1, const NdArray& v2, const NdArray& mask);
// Noise variant keeping unit variance: divided by sqrt(2m^2 - 2m + 1).
NdArray masked_mix_noise(const NdArray& n1, const NdArray& n2, const NdArray& mask);

// Area average when shrinking an axis, bilinear when growing it.
NdArray resample_mask(const NdArray& mask, int h, int w);
// Separable Gaussian blur with edge replication; sigma in cells, <= 0 is identity.
NdArray gaussian_smooth(const NdArray& mask, double sigma);

struct MixOptions {
  bool smooth = false;
  // Per-block sigma in cells of that block's grid; missing entries default to 0.05 * grid side.
  std::vector<double> sigmas;
};

// Feature, rgb, style maps: masked_mix; noises: masked_mix_noise; style vectors and z:
// interpolated with the mask mean.
LatentRep mix_reps(const LatentRep& rep1, const LatentRep& rep2, const NdArray& mask, const MixOptions& opt,
                   const GeneratorConfig& cfg);

// m(x) = 1 / (1 + exp(-(x + 0.5 - offset) / max(slope, 1e-6))), x the column index.
NdArray make_ramp_mask(int h, int w, double offset_px, double slope);

}  // namespace slk
