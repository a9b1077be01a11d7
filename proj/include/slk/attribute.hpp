#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "slk/generator.hpp"

namespace slk {

struct AttributeDirection {
  NdArray v;  // [D] for W, or [num_styles, D] for W+

  double norm() const;
  bool per_slot() const { return v.ndim() == 2; }
};

AttributeDirection make_direction(NdArray v, const GeneratorConfig& cfg);

// Difference of W means between the brighter and darker halves of `n` generated images.
AttributeDirection brightness_direction(const GeneratorWeights& gw, const GeneratorConfig& cfg, int n,
                                        std::uint64_t seed);

// Translates every style (and every spatial position of style maps) by strength * v.
LatentRep apply_direction_styles(const LatentRep& rep, const AttributeDirection& dir, double strength,
                                 const GeneratorConfig& cfg);

struct AttributeModel {
  int block = 0;
  NdArray m;  // [Cf+3, Cf+3, 1, 1] (block 1: [Cf, Cf, 1, 1]); no bias
  double c_min = 0;
  double c_max = 0;
  std::string direction_hash;
};

// +-20 units scaled by sqrt(D/512), divided by |v|.
double default_c_max(const AttributeDirection& dir, const GeneratorConfig& cfg);

AttributeModel init_attribute_model(int block, const GeneratorConfig& cfg);

// Unit offsets (df, dr) predicted by M from concat(f, bilinear-upsampled r).
struct AttributeOffset {
  NdArray dfeature;
  std::optional<NdArray> drgb;
};

Var attribute_offsets(const Var& feature, const std::optional<Var>& rgb, const Var& m, int batch);
AttributeOffset predict_offset(const LatentRep& rep, const AttributeModel& model, const GeneratorConfig& cfg);

// f += c df, r += c dr, styles += c v, with (df, dr) given.
LatentRep apply_offset(const LatentRep& rep, const AttributeOffset& off, const AttributeDirection& dir, double c,
                       const GeneratorConfig& cfg);
// predict_offset on rep, then apply_offset.
LatentRep apply_attribute_model(const LatentRep& rep, const AttributeModel& model, const AttributeDirection& dir,
                                double c, const GeneratorConfig& cfg);

struct AttributeTrainConfig {
  int steps = 300;
  int batch = 4;
  double lr = 1e-2;
  double lambda_f = 1.0;
  double lambda_perc = 1.0;
  std::optional<double> c_fixed;  // overrides sampling from [c_min, c_max]
};

struct AttributeTrainResult {
  AttributeModel model;
  std::vector<double> losses;
};

AttributeTrainResult train_attribute_model(const GeneratorWeights& gw, const GeneratorConfig& cfg,
                                           const AttributeDirection& dir, int block,
                                           const AttributeTrainConfig& tcfg, std::uint64_t seed);

// Image MSE between the spatial edit (with or without M) and the W+ edit, for one sample.
struct AttributeEval {
  double with_model = 0;
  double baseline = 0;
};

AttributeEval evaluate_attribute(const LatentRep& nwp_sample, const AttributeModel& model,
                                 const AttributeDirection& dir, double c, const GeneratorWeights& gw,
                                 const GeneratorConfig& cfg);

}  // namespace slk
