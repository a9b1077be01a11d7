#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "slk/distribution.hpp"
#include "slk/generator.hpp"

namespace slk {

// Mean of pixel MSE at full, 1/2 and 1/4 resolution.
Var perceptual_proxy(const Var& x, const Var& y);
// Average-pools an image `factor` times 2x2 (factor 1 = identity).
Var downscale(const Var& image, int factor);

struct EncoderConfig {
  int block = 3;
  std::vector<int> widths = {32, 64, 64, 64};
  int image_scale = 1;  // encoder input is the image pooled by this factor (power of two)
};

template <class T>
struct EncoderTensors {
  std::vector<T> conv_w;  // [widths[s], in, 3, 3]
  std::vector<T> conv_b;
  T head_f_w, head_f_b;  // 1x1 conv -> feature channels
  T head_r_w, head_r_b;  // 1x1 conv -> rgb channels (unused for block 1)
  T head_s_w, head_s_b;  // linear pooled -> styles * latent_dim

  template <class F>
  void visit(F&& f) {
    for (std::size_t s = 0; s < conv_w.size(); ++s) {
      f("stage" + std::to_string(s) + ".w", conv_w[s]);
      f("stage" + std::to_string(s) + ".b", conv_b[s]);
    }
    f("head_f.w", head_f_w);
    f("head_f.b", head_f_b);
    f("head_r.w", head_r_w);
    f("head_r.b", head_r_b);
    f("head_s.w", head_s_w);
    f("head_s.b", head_s_b);
  }
};

struct EncoderModel {
  EncoderConfig cfg;
  EncoderTensors<NdArray> w;
};

EncoderModel init_encoder(const EncoderConfig& ecfg, const GeneratorConfig& gcfg, std::uint64_t seed);
EncoderTensors<Var> encoder_params(EncoderModel& m, bool trainable);

// Predicts an FWp(block) representation (feature, rgb, styles) from images [B,3,H,W].
VarRep encode(const Var& image, const EncoderTensors<Var>& p, const EncoderConfig& ecfg, const GeneratorConfig& gcfg);
LatentRep encode(const NdArray& image, const EncoderModel& m, const GeneratorConfig& gcfg);

struct EncoderTrainConfig {
  int steps = 200;
  int batch = 4;
  double lr = 2e-3;
  double lambda_maps = 1.0;
  double lambda_mse = 0.25;
  double lambda_perc = 1.0;
};

struct EncoderTrainResult {
  EncoderModel model;
  std::vector<double> losses;
};

EncoderTrainResult train_encoder(const GeneratorWeights& gw, const GeneratorConfig& gcfg, const EncoderConfig& ecfg,
                                 const EncoderTrainConfig& tcfg, std::uint64_t seed);

// Targets for styles, feature and rgb of the FNWp(block) space.
struct ComponentTargets {
  TargetDistribution styles;
  TargetDistribution feature;
  std::optional<TargetDistribution> rgb;
};

ComponentTargets build_component_targets(const GeneratorWeights& gw, const GeneratorConfig& gcfg, int block,
                                         int n_samples, std::uint64_t seed);

// Target of length n matched to `t` by quantile (identity when n equals its length).
TargetDistribution resample_target(const TargetDistribution& t, std::size_t n);

struct ProjectionConfig {
  int iters = 250;
  double lr = 0.1;
  int warmup = 50;
  double lambda_perc = 1.0;
  double lambda_mse = 0.25;
  double lambda_noise = 4e5;
  bool rescale_noise = true;
  double lambda_dist = 0.0;
  int loss_scale = 1;  // both images pooled by this factor before the losses
  bool until_convergence = false;
  int max_iters = 5000;
  double conv_tol = 1e-5;
  int conv_window = 50;
};

struct ProjectionResult {
  LatentRep rep;
  std::vector<double> losses;
  std::vector<double> mse;  // full-resolution image MSE per iteration (before the step)
  double final_mse = 0;
  double lambda_noise_effective = 0;
  int iterations = 0;
  bool aborted = false;
  std::string diagnostic;
};

// Styles of a rep flattened in slot order.
NdArray flatten_styles(const LatentRep& rep);

// Optimizes an FNWp(i) representation (an FWp(i) init gets fresh noise maps) toward `image` [1,3,H,W].
ProjectionResult optimize_latent(const NdArray& image, const LatentRep& init, const ProjectionConfig& cfg,
                                 const GeneratorWeights& gw, const GeneratorConfig& gcfg,
                                 const ComponentTargets* targets, std::uint64_t seed);

}  // namespace slk
