#include "slk/mixing.hpp"

#include <algorithm>
#include <cmath>

#include "slk/latent_spaces.hpp"
#include "slk/resample.hpp"

namespace slk {

void check_mask(const NdArray& mask) {
  if (mask.ndim() != 2) throw ValidationError("mask must be [H,W], got " + shape_str(mask.shape()));
  for (double v : mask.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("mask values must lie in [0,1]");
  }
}

namespace {

void check_pair(const NdArray& a, const NdArray& b, const NdArray& mask) {
  check_mask(mask);
  if (a.shape() != b.shape()) {
    throw ValidationError("mix operands differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  if (a.ndim() < 2 || a.dim(-2) != mask.dim(0) || a.dim(-1) != mask.dim(1)) {
    throw ValidationError("mask " + shape_str(mask.shape()) + " does not match operand extents " +
                          shape_str(a.shape()));
  }
}

template <class F>
NdArray mix_with(const NdArray& a, const NdArray& b, const NdArray& mask, F f) {
  check_pair(a, b, mask);
  NdArray out(a.shape());
  const std::size_t hw = mask.size();
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i], mask[i % hw]);
  return out;
}

}  // namespace

namespace {

// (1-m) a + m b reproduces either endpoint exactly at m = 0 and m = 1.
double lerp_exact(double a, double b, double m) { return a == b ? a : (1 - m) * a + m * b; }

}  // namespace

NdArray masked_mix(const NdArray& v1, const NdArray& v2, const NdArray& mask) {
  return mix_with(v1, v2, mask, lerp_exact);
}

NdArray masked_mix_noise(const NdArray& n1, const NdArray& n2, const NdArray& mask) {
  return mix_with(n1, n2, mask,
                  [](double a, double b, double m) {
                    // identical sources are already unit variance
                    if (a == b) return a;
                    return lerp_exact(a, b, m) / std::sqrt(2 * m * m - 2 * m + 1);
                  });
}

NdArray resample_mask(const NdArray& mask, int h, int w) {
  NdArray out = mask;
  if (w < mask.dim(1)) out = resize_area(out, out.dim(0), w);
  if (w > mask.dim(1)) out = resize_bilinear(out, out.dim(0), w);
  if (h < mask.dim(0)) out = resize_area(out, h, w);
  if (h > mask.dim(0)) out = resize_bilinear(out, h, w);
  for (auto& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

NdArray gaussian_smooth(const NdArray& mask, double sigma) {
  if (!(sigma > 0)) return mask;
  const int r = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(2 * r + 1);
  double total = 0;
  for (int i = -r; i <= r; ++i) total += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= total;
  const int h = mask.dim(0);
  const int w = mask.dim(1);
  NdArray tmp(mask.shape());
  NdArray out(mask.shape());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * mask[y * w + std::clamp(x + i, 0, w - 1)];
      tmp[y * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp[std::clamp(y + i, 0, h - 1) * w + x];
      out[y * w + x] = std::clamp(acc, 0.0, 1.0);
    }
  return out;
}

LatentRep mix_reps(const LatentRep& rep1, const LatentRep& rep2, const NdArray& mask, const MixOptions& opt,
                   const GeneratorConfig& cfg) {
  validate(rep1, cfg);
  validate(rep2, cfg);
  check_mask(mask);
  if (rep1.space != rep2.space) {
    throw ValidationError("cannot mix " + rep1.space.str() + " with " + rep2.space.str());
  }
  const SpaceId sp = rep1.space;
  const int i = sp.start_block();

  auto mask_for = [&](int block, int h, int w) {
    NdArray m = resample_mask(mask, h, w);
    if (opt.smooth) {
      const double sigma = block - 1 < static_cast<int>(opt.sigmas.size()) && block >= 1
                               ? opt.sigmas[block - 1]
                               : 0.05 * std::max(h, w);
      m = gaussian_smooth(m, sigma);
    }
    return m;
  };
  auto spatial = [&](const NdArray& a, const NdArray& b, int block, bool noise) {
    if (a.shape() != b.shape()) {
      throw ValidationError("component shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    const NdArray m = mask_for(block, a.dim(-2), a.dim(-1));
    return noise ? masked_mix_noise(a, b, m) : masked_mix(a, b, m);
  };
  const double mbar = mean(mask);
  auto vector_mix = [&](const NdArray& a, const NdArray& b) {
    if (a.shape() != b.shape()) {
      throw ValidationError("component shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    NdArray out(a.shape());
    for (std::size_t k = 0; k < a.size(); ++k) out[k] = lerp_exact(a[k], b[k], mbar);
    return out;
  };

  LatentRep out = rep1;
  if (rep1.feature) out.feature = spatial(*rep1.feature, *rep2.feature, i, false);
  if (rep1.rgb) out.rgb = spatial(*rep1.rgb, *rep2.rgb, i - 1, false);
  if (rep1.z) out.z = vector_mix(*rep1.z, *rep2.z);
  for (std::size_t k = 0; k < rep1.styles.size(); ++k) {
    const int slot = sp.kind == SpaceKind::W ? 0 : cfg.first_style(i) + static_cast<int>(k);
    out.styles[k] = sp.spatial_styles() ? spatial(rep1.styles[k], rep2.styles[k], cfg.block_of_style(slot), false)
                                        : vector_mix(rep1.styles[k], rep2.styles[k]);
  }
  for (std::size_t k = 0; k < rep1.noises.size(); ++k) {
    const int idx = cfg.first_noise(i) + static_cast<int>(k);
    out.noises[k] = spatial(rep1.noises[k], rep2.noises[k], cfg.block_of_noise(idx), true);
  }
  validate(out, cfg);
  return out;
}

NdArray make_ramp_mask(int h, int w, double offset_px, double slope) {
  if (h < 1 || w < 1) throw ValidationError("mask extents must be positive");
  if (!(slope >= 0)) throw ValidationError("slope must be >= 0");
  const double s = std::max(slope, 1e-6);
  NdArray m(Shape{h, w});
  for (int x = 0; x < w; ++x) {
    const double v = 1.0 / (1.0 + std::exp(-(x + 0.5 - offset_px) / s));
    for (int y = 0; y < h; ++y) m[static_cast<std::size_t>(y) * w + x] = v;
  }
  return m;
}

}  // namespace slk
