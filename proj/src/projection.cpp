#include "slk/projection.hpp"

#include <cmath>

#include "slk/latent_spaces.hpp"
#include "slk/noise_regularizer.hpp"
#include "slk/optim.hpp"

namespace slk {

Var downscale(const Var& image, int factor) {
  if (factor < 1 || (factor & (factor - 1)) != 0) throw ValidationError("scale factor must be a power of two");
  Var x = image;
  for (int f = factor; f > 1; f /= 2) x = avg_pool2(x);
  return x;
}

Var perceptual_proxy(const Var& x, const Var& y) {
  if (x.shape() != y.shape()) {
    throw ValidationError("image shapes differ: " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  }
  Var total = mse(x, y);
  Var a = x;
  Var b = y;
  for (int level = 0; level < 2; ++level) {
    a = avg_pool2(a);
    b = avg_pool2(b);
    total = add(total, mse(a, b));
  }
  return scale(total, 1.0 / 3.0);
}

EncoderModel init_encoder(const EncoderConfig& ecfg, const GeneratorConfig& gcfg, std::uint64_t seed) {
  gcfg.validate();
  if (ecfg.block < 1 || ecfg.block > gcfg.num_blocks) {
    throw ValidationError("encoder block " + std::to_string(ecfg.block) + " outside 1.." +
                          std::to_string(gcfg.num_blocks));
  }
  if (ecfg.widths.empty()) throw ValidationError("encoder needs at least one stage");
  std::mt19937_64 rng(seed);
  EncoderModel m;
  m.cfg = ecfg;
  int in = gcfg.img_channels;
  for (int wdt : ecfg.widths) {
    m.w.conv_w.push_back(NdArray::randn({wdt, in, 3, 3}, rng, std::sqrt(2.0 / (in * 9))));
    m.w.conv_b.push_back(NdArray({wdt}, 0.0));
    in = wdt;
  }
  const int n_styles = gcfg.num_styles() - gcfg.first_style(ecfg.block);
  const int feat_ch = gcfg.feature_channels(ecfg.block);
  // heads read stage activations; sizes are checked at encode time
  int f_in = 0;
  int r_in = 0;
  {
    // resolve which stage each head reads for the native image size
    const int side = gcfg.output_side() / ecfg.image_scale;
    const int f_side = gcfg.output_side() >> (gcfg.num_blocks - ecfg.block);
    int s = side;
    for (std::size_t k = 0; k < ecfg.widths.size(); ++k) {
      if (k > 0) s /= 2;
      if (s == f_side) f_in = ecfg.widths[k];
      if (s == f_side / 2) r_in = ecfg.widths[k];
    }
    if (f_in == 0) throw ValidationError("no encoder stage matches the feature extents of block " + std::to_string(ecfg.block));
    if (r_in == 0) r_in = ecfg.widths.back();
  }
  m.w.head_f_w = NdArray::randn({feat_ch, f_in, 1, 1}, rng, 1.0 / std::sqrt(f_in));
  m.w.head_f_b = NdArray({feat_ch}, 0.0);
  m.w.head_r_w = NdArray::randn({gcfg.img_channels, r_in, 1, 1}, rng, 1.0 / std::sqrt(r_in));
  m.w.head_r_b = NdArray({gcfg.img_channels}, 0.0);
  m.w.head_s_w = NdArray::randn({n_styles * gcfg.latent_dim, in}, rng, 1.0 / std::sqrt(in));
  m.w.head_s_b = NdArray({n_styles * gcfg.latent_dim}, 0.0);
  return m;
}

EncoderTensors<Var> encoder_params(EncoderModel& m, bool trainable) {
  EncoderTensors<Var> p;
  for (const auto& a : m.w.conv_w) p.conv_w.emplace_back(a, trainable);
  for (const auto& a : m.w.conv_b) p.conv_b.emplace_back(a, trainable);
  p.head_f_w = Var(m.w.head_f_w, trainable);
  p.head_f_b = Var(m.w.head_f_b, trainable);
  p.head_r_w = Var(m.w.head_r_w, trainable);
  p.head_r_b = Var(m.w.head_r_b, trainable);
  p.head_s_w = Var(m.w.head_s_w, trainable);
  p.head_s_b = Var(m.w.head_s_b, trainable);
  return p;
}

namespace {

Var pointwise_head(const Var& act, const Var& w, const Var& b) {
  if (act.shape()[1] != w.shape()[1]) {
    throw ValidationError("encoder head expects " + std::to_string(w.shape()[1]) + " channels, stage has " +
                          std::to_string(act.shape()[1]));
  }
  return add(conv2d(act, w, Padding::zero), reshape(b, {1, w.shape()[0], 1, 1}));
}

const Var& activation_with(const std::vector<Var>& acts, int h, int w, const char* head) {
  for (auto it = acts.rbegin(); it != acts.rend(); ++it) {
    if (it->shape()[2] == h && it->shape()[3] == w) return *it;
  }
  throw ValidationError(std::string("no encoder activation with extents ") + std::to_string(h) + "x" +
                        std::to_string(w) + " for head " + head);
}

}  // namespace

VarRep encode(const Var& image, const EncoderTensors<Var>& p, const EncoderConfig& ecfg,
              const GeneratorConfig& gcfg) {
  const Shape& is = image.shape();
  if (is.size() != 4 || is[1] != gcfg.img_channels) {
    throw ValidationError("encoder input must be [B," + std::to_string(gcfg.img_channels) + ",H,W], got " +
                          shape_str(is));
  }
  const int i = ecfg.block;
  const int down = 1 << (gcfg.num_blocks - i);
  if (is[2] % (2 * down) != 0 || is[3] % (2 * down) != 0) {
    throw ValidationError("image extents " + shape_str(is) + " are not a multiple of " + std::to_string(2 * down));
  }
  const int fh = is[2] / down;
  const int fw = is[3] / down;
  Var h = downscale(image, ecfg.image_scale);
  std::vector<Var> acts;
  for (std::size_t s = 0; s < p.conv_w.size(); ++s) {
    if (s > 0) h = avg_pool2(h);
    h = lrelu(add(conv2d(h, p.conv_w[s], Padding::zero), reshape(p.conv_b[s], {1, p.conv_w[s].shape()[0], 1, 1})));
    acts.push_back(h);
  }
  VarRep rep;
  rep.space = SpaceId::fwp(i);
  rep.feature = pointwise_head(activation_with(acts, fh, fw, "F"), p.head_f_w, p.head_f_b);
  if (i >= 2) rep.rgb = pointwise_head(activation_with(acts, fh / 2, fw / 2, "R"), p.head_r_w, p.head_r_b);
  Var pooled = mean_over(acts.back(), {2, 3});
  Var styles = linear(pooled, p.head_s_w, p.head_s_b);
  const int d = gcfg.latent_dim;
  const int n_styles = gcfg.num_styles() - gcfg.first_style(i);
  for (int k = 0; k < n_styles; ++k) rep.styles.push_back(slice(styles, 1, k * d, (k + 1) * d));
  return rep;
}

LatentRep encode(const NdArray& image, const EncoderModel& m, const GeneratorConfig& gcfg) {
  NoGradGuard guard;
  EncoderModel copy = m;
  return to_values(encode(Var::constant(image), encoder_params(copy, false), m.cfg, gcfg));
}

namespace {

Var styles_concat(const VarRep& rep) { return concat(rep.styles, 1); }

std::vector<Var> leaf_list(EncoderTensors<Var>& p) {
  std::vector<Var> out;
  p.visit([&](const std::string&, Var& v) { out.push_back(v); });
  return out;
}

}  // namespace

EncoderTrainResult train_encoder(const GeneratorWeights& gw, const GeneratorConfig& gcfg, const EncoderConfig& ecfg,
                                 const EncoderTrainConfig& tcfg, std::uint64_t seed) {
  if (tcfg.steps < 0 || tcfg.batch < 1) throw ValidationError("encoder training needs steps >= 0 and batch >= 1");
  EncoderTrainResult res;
  res.model = init_encoder(ecfg, gcfg, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  EncoderTensors<Var> p = encoder_params(res.model, true);
  Adam opt(leaf_list(p), AdamConfig{tcfg.lr, 0.9, 0.999, 1e-8, 0});
  const GeneratorParams gp = as_params(gw, false);
  const SpaceId target_space = SpaceId::fnwp(ecfg.block);

  for (int step = 0; step < tcfg.steps; ++step) {
    const LatentRep y = sample_space(target_space, tcfg.batch, gw, gcfg, rng);
    const NdArray y_img = synthesize(y, gw, gcfg);
    const Var y_img_v = Var::constant(y_img);
    VarRep x = encode(y_img_v, p, ecfg, gcfg);
    const VarRep yv = to_vars(y, false);
    Var maps = add(mse(*x.feature, *yv.feature), mse(styles_concat(x), styles_concat(yv)));
    if (x.rgb) maps = add(maps, mse(*x.rgb, *yv.rgb));
    x.space = target_space;
    x.noises = yv.noises;
    Var x_img = synthesize(x, gp, gcfg);
    Var loss = add(add(scale(maps, tcfg.lambda_maps), scale(mse(x_img, y_img_v), tcfg.lambda_mse)),
                   scale(perceptual_proxy(x_img, y_img_v), tcfg.lambda_perc));
    const double lv = loss.value().item();
    if (!std::isfinite(lv)) throw NumericalError("encoder training: non-finite loss at step " + std::to_string(step));
    res.losses.push_back(lv);
    backward(loss);
    opt.step();
    opt.zero_grad();
  }
  std::size_t k = 0;
  const std::vector<Var> leaves = leaf_list(p);
  res.model.w.visit([&](const std::string&, NdArray& a) { a = leaves[k++].value(); });
  return res;
}

NdArray flatten_styles(const LatentRep& rep) {
  std::vector<double> all;
  for (const auto& s : rep.styles) all.insert(all.end(), s.data().begin(), s.data().end());
  const int n = static_cast<int>(all.size());
  return NdArray(Shape{n}, std::move(all));
}

ComponentTargets build_component_targets(const GeneratorWeights& gw, const GeneratorConfig& gcfg, int block,
                                         int n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw ValidationError("target construction needs at least one sample");
  std::mt19937_64 rng(seed);
  std::vector<double> styles;
  std::vector<double> feature;
  std::vector<double> rgb;
  std::size_t dim_s = 0;
  std::size_t dim_f = 0;
  std::size_t dim_r = 0;
  const int chunk = 32;
  for (int done = 0; done < n_samples; done += chunk) {
    const int b = std::min(chunk, n_samples - done);
    const LatentRep rep = sample_space(SpaceId::fwp(block), b, gw, gcfg, rng);
    const NdArray s = flatten_styles(rep);
    styles.insert(styles.end(), s.data().begin(), s.data().end());
    feature.insert(feature.end(), rep.feature->data().begin(), rep.feature->data().end());
    dim_s = s.size() / b;
    dim_f = rep.feature->size() / b;
    if (rep.rgb) {
      rgb.insert(rgb.end(), rep.rgb->data().begin(), rep.rgb->data().end());
      dim_r = rep.rgb->size() / b;
    }
  }
  ComponentTargets t;
  t.styles = build_target(std::move(styles), dim_s);
  t.styles.component = "styles";
  t.feature = build_target(std::move(feature), dim_f);
  t.feature.component = "feature";
  t.styles.n_samples = t.feature.n_samples = static_cast<std::size_t>(n_samples);
  if (dim_r > 0) {
    t.rgb = build_target(std::move(rgb), dim_r);
    t.rgb->component = "rgb";
    t.rgb->n_samples = static_cast<std::size_t>(n_samples);
  }
  return t;
}

TargetDistribution resample_target(const TargetDistribution& t, std::size_t n) {
  if (n == t.sorted_values.size()) return t;
  TargetDistribution out = t;
  out.sorted_values.resize(n);
  for (std::size_t k = 0; k < n; ++k) out.sorted_values[k] = target_quantile(t, (static_cast<double>(k) + 0.5) / n);
  return out;
}

ProjectionResult optimize_latent(const NdArray& image, const LatentRep& init, const ProjectionConfig& cfg,
                                 const GeneratorWeights& gw, const GeneratorConfig& gcfg,
                                 const ComponentTargets* targets, std::uint64_t seed) {
  if (cfg.iters < 1 && !cfg.until_convergence) throw ValidationError("projection needs iters >= 1");
  if (cfg.lambda_perc < 0 || cfg.lambda_mse < 0 || cfg.lambda_noise < 0 || cfg.lambda_dist < 0) {
    throw ValidationError("loss weights must be >= 0");
  }
  if (cfg.lambda_dist > 0 && targets == nullptr) throw ValidationError("lambda_dist > 0 needs target distributions");
  const SpaceId sp = init.space;
  if (sp.kind != SpaceKind::FNWp && sp.kind != SpaceKind::FWp) {
    throw ValidationError("projection starts from fwp:<i> or fnwp:<i>, got " + sp.str());
  }
  validate(init, gcfg);
  if (batch_size(init) != 1) throw ValidationError("projection optimizes one image at a time");
  std::mt19937_64 rng(seed);
  LatentRep start = init;
  if (sp.kind == SpaceKind::FWp) {
    start.space = SpaceId::fnwp(sp.block);
    start.noises = random_noises(start, start.space, gcfg, rng);
  }
  const auto [ih, iw] = image_extents(start, gcfg);
  if (image.shape() != Shape{1, gcfg.img_channels, ih, iw}) {
    throw ValidationError("image " + shape_str(image.shape()) + " does not match the representation's output " +
                          shape_str({1, gcfg.img_channels, ih, iw}));
  }

  VarRep rep = to_vars(start, true);
  std::vector<Var> leaves = rep.styles;
  leaves.push_back(*rep.feature);
  if (rep.rgb) leaves.push_back(*rep.rgb);
  for (const auto& n : rep.noises) leaves.push_back(n);
  Adam opt(leaves, AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.warmup});

  const GeneratorParams gp = as_params(gw, false);
  const Var target_full = Var::constant(image);
  const Var target = downscale(target_full, cfg.loss_scale);

  std::optional<TargetDistribution> t_styles, t_feature, t_rgb;
  if (cfg.lambda_dist > 0) {
    std::size_t n_styles = 0;
    for (const auto& s : start.styles) n_styles += s.size();
    t_styles = resample_target(targets->styles, n_styles);
    t_feature = resample_target(targets->feature, start.feature->size());
    if (start.rgb && targets->rgb) t_rgb = resample_target(*targets->rgb, start.rgb->size());
  }

  ProjectionResult res;
  LatentRep last_good = to_values(rep);
  const int cap = cfg.until_convergence ? cfg.max_iters : cfg.iters;
  for (int t = 1; t <= cap; ++t) {
    Var img = synthesize(rep, gp, gcfg);
    Var x = downscale(img, cfg.loss_scale);
    Var proxy = perceptual_proxy(x, target);
    Var pix = mse(x, target);
    Var noise = noise_reg_loss(rep.noises);
    if (t == 1) {
      if (cfg.rescale_noise) {
        const double n0 = noise.value().item();
        const double p0 = proxy.value().item();
        res.lambda_noise_effective = n0 > 0 && p0 > 0 ? (cfg.lambda_noise / 4e5) * p0 / n0 : 0.0;
      } else {
        res.lambda_noise_effective = cfg.lambda_noise;
      }
    }
    Var loss = add(add(scale(proxy, cfg.lambda_perc), scale(pix, cfg.lambda_mse)),
                   scale(noise, res.lambda_noise_effective));
    if (cfg.lambda_dist > 0) {
      Var dist = distribution_regularization(concat(rep.styles, 1), *t_styles);
      dist = add(dist, distribution_regularization(*rep.feature, *t_feature));
      if (t_rgb) dist = add(dist, distribution_regularization(*rep.rgb, *t_rgb));
      loss = add(loss, scale(dist, cfg.lambda_dist));
    }
    const double lv = loss.value().item();
    if (!std::isfinite(lv)) {
      res.aborted = true;
      res.diagnostic = "non-finite loss at iteration " + std::to_string(t);
      res.rep = last_good;
      res.iterations = t - 1;
      res.final_mse = res.mse.empty() ? NAN : res.mse.back();
      return res;
    }
    last_good = to_values(rep);
    res.losses.push_back(lv);
    res.mse.push_back(cfg.loss_scale == 1 ? pix.value().item() : mse(img, target_full).value().item());
    backward(loss);
    opt.step();
    opt.zero_grad();
    for (auto& n : rep.noises) n.node()->value = standardize_noise(n.value(), rng);
    res.iterations = t;
    if (cfg.until_convergence && t > cfg.conv_window) {
      const double before = res.losses[t - 1 - cfg.conv_window];
      const double rel = (before - lv) / std::max(std::abs(before), 1e-300);
      if (rel < cfg.conv_tol) break;
    }
  }
  res.rep = to_values(rep);
  {
    NoGradGuard guard;
    res.final_mse = mse(Var::constant(synthesize(res.rep, gw, gcfg)), target_full).value().item();
  }
  return res;
}

}  // namespace slk
