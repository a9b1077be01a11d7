#include "slk/attribute.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "slk/latent_spaces.hpp"
#include "slk/optim.hpp"
#include "slk/projection.hpp"
#include "slk/serialize.hpp"

namespace slk {

double AttributeDirection::norm() const {
  double s = 0;
  for (double x : v.data()) s += x * x;
  return std::sqrt(s);
}

AttributeDirection make_direction(NdArray v, const GeneratorConfig& cfg) {
  const bool vec = v.ndim() == 1 && v.dim(0) == cfg.latent_dim;
  const bool slots = v.ndim() == 2 && v.dim(0) == cfg.num_styles() && v.dim(1) == cfg.latent_dim;
  if (!vec && !slots) {
    throw ValidationError("direction must be [" + std::to_string(cfg.latent_dim) + "] or [" +
                          std::to_string(cfg.num_styles()) + "," + std::to_string(cfg.latent_dim) + "], got " +
                          shape_str(v.shape()));
  }
  AttributeDirection d{std::move(v)};
  if (!(d.norm() > 0) || !d.v.all_finite()) throw ValidationError("direction must be finite with nonzero norm");
  return d;
}

AttributeDirection brightness_direction(const GeneratorWeights& gw, const GeneratorConfig& cfg, int n,
                                        std::uint64_t seed) {
  if (n < 2) throw ValidationError("brightness direction needs at least two samples");
  std::mt19937_64 rng(seed);
  const LatentRep w = sample_space(SpaceId::w(), n, gw, cfg, rng);
  const NdArray img = synthesize(w, gw, cfg);
  const std::size_t per = img.size() / n;
  std::vector<double> bright(n);
  for (int b = 0; b < n; ++b) {
    double s = 0;
    for (std::size_t k = 0; k < per; ++k) s += img[b * per + k];
    bright[b] = s / per;
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return bright[a] < bright[b]; });
  const int d = cfg.latent_dim;
  NdArray v(Shape{d}, 0.0);
  const int half = n / 2;
  for (int r = 0; r < n; ++r) {
    const bool dark = r < half;
    const bool light = r >= n - half;
    if (!dark && !light) continue;
    const double sign = light ? 1.0 / half : -1.0 / half;
    for (int k = 0; k < d; ++k) v[k] += sign * w.styles[0][static_cast<std::size_t>(order[r]) * d + k];
  }
  return make_direction(std::move(v), cfg);
}

namespace {

// Offset for style slot `slot`, as [D].
const double* slot_vector(const AttributeDirection& dir, int slot, int d) {
  return dir.per_slot() ? dir.v.data().data() + static_cast<std::size_t>(slot) * d : dir.v.data().data();
}

}  // namespace

LatentRep apply_direction_styles(const LatentRep& rep, const AttributeDirection& dir, double strength,
                                 const GeneratorConfig& cfg) {
  validate(rep, cfg);
  if (!std::isfinite(strength)) throw ValidationError("strength must be finite");
  const SpaceId sp = rep.space;
  if (sp.has_z()) throw ValidationError(sp.str() + " carries z, not styles; convert to a W space first");
  if (dir.per_slot() && sp.kind == SpaceKind::W) throw ValidationError("a per-slot direction needs a W+ space");
  const int d = cfg.latent_dim;
  if ((dir.per_slot() ? dir.v.dim(1) : dir.v.dim(0)) != d) {
    throw ValidationError("direction has dimension " + shape_str(dir.v.shape()) + ", styles have " +
                          std::to_string(d));
  }
  LatentRep out = rep;
  const int first = cfg.first_style(sp.start_block());
  for (std::size_t k = 0; k < out.styles.size(); ++k) {
    const double* v = slot_vector(dir, first + static_cast<int>(k), d);
    NdArray& s = out.styles[k];
    const int batch = s.dim(0);
    const std::size_t hw = s.ndim() == 4 ? static_cast<std::size_t>(s.dim(2)) * s.dim(3) : 1;
    for (int b = 0; b < batch; ++b)
      for (int c = 0; c < d; ++c) {
        double* p = s.data().data() + (static_cast<std::size_t>(b) * d + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) p[i] += strength * v[c];
      }
  }
  return out;
}

double default_c_max(const AttributeDirection& dir, const GeneratorConfig& cfg) {
  return 20.0 * std::sqrt(cfg.latent_dim / 512.0) / dir.norm();
}

AttributeModel init_attribute_model(int block, const GeneratorConfig& cfg) {
  if (block < 1 || block > cfg.num_blocks) throw ValidationError("attribute block outside 1.." + std::to_string(cfg.num_blocks));
  AttributeModel m;
  m.block = block;
  const int ch = cfg.feature_channels(block) + (block >= 2 ? cfg.img_channels : 0);
  m.m = NdArray({ch, ch, 1, 1}, 0.0);
  return m;
}

Var attribute_offsets(const Var& feature, const std::optional<Var>& rgb, const Var& m, int batch) {
  (void)batch;
  const int cf = feature.shape()[1];
  Var in = rgb ? concat({feature, upsample_bilinear2(*rgb)}, 1) : feature;
  if (m.shape()[1] != in.shape()[1]) {
    throw ValidationError("attribute model expects " + std::to_string(m.shape()[1]) + " input channels, got " +
                          std::to_string(in.shape()[1]));
  }
  if (m.shape()[0] != in.shape()[1]) throw ValidationError("attribute model must be square, got " + shape_str(m.shape()));
  (void)cf;
  return conv2d(in, m, Padding::zero);
}

namespace {

struct SplitOffsets {
  Var df;
  std::optional<Var> dr;
};

SplitOffsets split_offsets(const Var& feature, const std::optional<Var>& rgb, const Var& m) {
  const int cf = feature.shape()[1];
  Var out = attribute_offsets(feature, rgb, m, feature.shape()[0]);
  SplitOffsets s;
  if (!rgb) {
    s.df = out;
    return s;
  }
  s.df = slice(out, 1, 0, cf);
  s.dr = avg_pool2(slice(out, 1, cf, out.shape()[1]));
  return s;
}

void check_model_rep(const LatentRep& rep, const AttributeModel& model) {
  if (!rep.space.has_feature() || rep.space.kind == SpaceKind::FNZ) {
    throw ValidationError("attribute model needs an F(N)(S)Wp space, got " + rep.space.str());
  }
  if (rep.space.block != model.block) {
    throw ValidationError("attribute model trained for block " + std::to_string(model.block) + ", rep is " +
                          rep.space.str());
  }
}

}  // namespace

AttributeOffset predict_offset(const LatentRep& rep, const AttributeModel& model, const GeneratorConfig& cfg) {
  validate(rep, cfg);
  check_model_rep(rep, model);
  NoGradGuard guard;
  std::optional<Var> rgb;
  if (rep.rgb) rgb = Var::constant(*rep.rgb);
  const SplitOffsets s = split_offsets(Var::constant(*rep.feature), rgb, Var::constant(model.m));
  AttributeOffset off;
  off.dfeature = s.df.value();
  if (s.dr) off.drgb = s.dr->value();
  return off;
}

LatentRep apply_offset(const LatentRep& rep, const AttributeOffset& off, const AttributeDirection& dir, double c,
                       const GeneratorConfig& cfg) {
  LatentRep out = apply_direction_styles(rep, dir, c, cfg);
  if (!out.feature || off.dfeature.shape() != out.feature->shape()) {
    throw ValidationError("feature offset does not match the representation");
  }
  for (std::size_t i = 0; i < out.feature->size(); ++i) (*out.feature)[i] += c * off.dfeature[i];
  if (out.rgb) {
    if (!off.drgb || off.drgb->shape() != out.rgb->shape()) throw ValidationError("rgb offset does not match");
    for (std::size_t i = 0; i < out.rgb->size(); ++i) (*out.rgb)[i] += c * (*off.drgb)[i];
  }
  return out;
}

LatentRep apply_attribute_model(const LatentRep& rep, const AttributeModel& model, const AttributeDirection& dir,
                                double c, const GeneratorConfig& cfg) {
  return apply_offset(rep, predict_offset(rep, model, cfg), dir, c, cfg);
}

AttributeTrainResult train_attribute_model(const GeneratorWeights& gw, const GeneratorConfig& cfg,
                                           const AttributeDirection& dir, int block,
                                           const AttributeTrainConfig& tcfg, std::uint64_t seed) {
  if (tcfg.steps < 0 || tcfg.batch < 1) throw ValidationError("attribute training needs steps >= 0 and batch >= 1");
  AttributeTrainResult res;
  res.model = init_attribute_model(block, cfg);
  res.model.c_max = default_c_max(dir, cfg);
  res.model.c_min = -res.model.c_max;
  res.model.direction_hash = fnv1a_hex(encode_array(dir.v));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(res.model.c_min, res.model.c_max);
  Var m = Var::param(res.model.m);
  Adam opt({m}, AdamConfig{tcfg.lr, 0.9, 0.999, 1e-8, 0});
  const GeneratorParams gp = as_params(gw, false);
  const SpaceId fn = SpaceId::fnwp(block);
  const int batch = tcfg.batch;

  for (int step = 0; step < tcfg.steps; ++step) {
    const LatentRep src = sample_space(SpaceId::nwp(), batch, gw, cfg, rng);
    std::vector<double> cs(batch);
    for (auto& c : cs) c = tcfg.c_fixed ? *tcfg.c_fixed : uni(rng);
    // per-sample translated targets
    std::vector<LatentRep> targets;
    for (int b = 0; b < batch; ++b) targets.push_back(apply_direction_styles(select_sample(src, b), dir, cs[b], cfg));
    const LatentRep y = convert_forward(stack_samples(targets), fn, gw, cfg);
    const LatentRep x0 = convert_forward(src, fn, gw, cfg);
    const NdArray y_img = synthesize(y, gw, cfg);

    NdArray cmat(Shape{batch, 1, 1, 1});
    for (int b = 0; b < batch; ++b) cmat[b] = cs[b];
    const Var cvar = Var::constant(cmat);
    const Var f = Var::constant(*x0.feature);
    std::optional<Var> r;
    if (x0.rgb) r = Var::constant(*x0.rgb);
    const SplitOffsets off = split_offsets(f, r, m);
    VarRep x = to_vars(y, false);
    x.feature = add(f, mul(cvar, off.df));
    Var loss_maps = mse(*x.feature, Var::constant(*y.feature));
    if (r) {
      x.rgb = add(*r, mul(cvar, *off.dr));
      loss_maps = add(loss_maps, mse(*x.rgb, Var::constant(*y.rgb)));
    }
    Var x_img = synthesize(x, gp, cfg);
    Var loss = add(scale(loss_maps, tcfg.lambda_f),
                   scale(perceptual_proxy(x_img, Var::constant(y_img)), tcfg.lambda_perc));
    const double lv = loss.value().item();
    if (!std::isfinite(lv)) throw NumericalError("attribute training: non-finite loss at step " + std::to_string(step));
    res.losses.push_back(lv);
    backward(loss);
    opt.step();
    opt.zero_grad();
  }
  res.model.m = m.value();
  return res;
}

AttributeEval evaluate_attribute(const LatentRep& nwp_sample, const AttributeModel& model,
                                 const AttributeDirection& dir, double c, const GeneratorWeights& gw,
                                 const GeneratorConfig& cfg) {
  const SpaceId fn = SpaceId::fnwp(model.block);
  const LatentRep y = convert_forward(apply_direction_styles(nwp_sample, dir, c, cfg), fn, gw, cfg);
  const LatentRep x0 = convert_forward(nwp_sample, fn, gw, cfg);
  const NdArray y_img = synthesize(y, gw, cfg);
  LatentRep edited = apply_attribute_model(x0, model, dir, c, cfg);
  LatentRep base = apply_direction_styles(x0, dir, c, cfg);
  auto dist = [&](const LatentRep& r) {
    const NdArray img = synthesize(r, gw, cfg);
    double s = 0;
    for (std::size_t i = 0; i < img.size(); ++i) s += (img[i] - y_img[i]) * (img[i] - y_img[i]);
    return s / static_cast<double>(img.size());
  };
  return {dist(edited), dist(base)};
}

}  // namespace slk
