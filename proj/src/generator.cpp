#include "slk/generator.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gemm.hpp"

namespace slk {

void GeneratorConfig::validate() const {
  if (latent_dim < 1) throw ValidationError("latent_dim must be >= 1");
  if (num_blocks < 1) throw ValidationError("num_blocks must be >= 1");
  if (base < 1) throw ValidationError("base must be >= 1");
  if (static_cast<int>(channels.size()) != num_blocks) {
    throw ValidationError("channels needs one entry per block (" + std::to_string(num_blocks) + "), got " +
                          std::to_string(channels.size()));
  }
  for (int c : channels) {
    if (c < 1) throw ValidationError("channel counts must be positive");
  }
  if (img_channels < 1) throw ValidationError("img_channels must be >= 1");
  if (mapping_layers < 0) throw ValidationError("mapping_layers must be >= 0");
  if (kernel < 1 || kernel % 2 == 0) throw ValidationError("kernel must be odd and positive");
  if (!(eps > 0)) throw ValidationError("eps must be positive");
  if (!(max_chunk_elems >= 1)) throw ValidationError("max_chunk_elems must be >= 1");
}

int GeneratorConfig::style_channels(int slot) const {
  if (slot < 0 || slot >= num_styles()) throw ValidationError("style slot " + std::to_string(slot) + " out of range");
  const int block = block_of_style(slot);
  if (block == 1) return channels[0];
  return slot == first_style(block) ? channels[block - 2] : channels[block - 1];
}

std::string padding_name(Padding p) { return p == Padding::circular ? "circular" : "zero"; }

Padding parse_padding(const std::string& s) {
  if (s == "zero") return Padding::zero;
  if (s == "circular") return Padding::circular;
  throw ValidationError("unknown padding '" + s + "' (zero|circular)");
}

GeneratorWeights init_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const int d = cfg.latent_dim;
  const int k = cfg.kernel;
  GeneratorWeights w;
  for (int l = 0; l < cfg.mapping_layers; ++l) {
    w.map_w.push_back(NdArray::randn({d, d}, rng, 1.0 / std::sqrt(d)));
    w.map_b.push_back(NdArray({d}, 0.0));
  }
  w.f1 = NdArray::randn({1, cfg.channels[0], cfg.base, cfg.base}, rng);
  auto conv = [&](int cin, int cout) {
    ConvLayerT<NdArray> c;
    c.weight = NdArray::randn({cout, cin, k, k}, rng, 1.0 / std::sqrt(cin * k * k));
    c.affine_w = NdArray::randn({cin, d}, rng, 1.0 / std::sqrt(d));
    c.affine_b = NdArray({cin}, 1.0);
    c.bias = NdArray({cout}, 0.0);
    c.noise_strength = NdArray({1}, 0.1);
    return c;
  };
  auto rgb = [&](int cin) {
    RgbLayerT<NdArray> r;
    r.weight = NdArray::randn({cfg.img_channels, cin, 1, 1}, rng, 0.5 / std::sqrt(cin));
    r.affine_w = NdArray::randn({cin, d}, rng, 1.0 / std::sqrt(d));
    r.affine_b = NdArray({cin}, 1.0);
    r.bias = NdArray({cfg.img_channels}, 0.0);
    return r;
  };
  w.convs.push_back(conv(cfg.channels[0], cfg.channels[0]));
  w.rgbs.push_back(rgb(cfg.channels[0]));
  for (int j = 2; j <= cfg.num_blocks; ++j) {
    w.convs.push_back(conv(cfg.channels[j - 2], cfg.channels[j - 1]));
    w.convs.push_back(conv(cfg.channels[j - 1], cfg.channels[j - 1]));
    w.rgbs.push_back(rgb(cfg.channels[j - 1]));
  }
  return w;
}

void check_weights(const GeneratorWeights& w, const GeneratorConfig& cfg) {
  GeneratorWeights ref = init_generator(cfg, 0);
  std::vector<std::pair<std::string, Shape>> want;
  ref.visit([&](const std::string& name, const NdArray& a) { want.emplace_back(name, a.shape()); });
  std::size_t idx = 0;
  bool count_ok = true;
  w.visit([&](const std::string& name, const NdArray& a) {
    if (idx >= want.size()) {
      count_ok = false;
      return;
    }
    if (a.shape() != want[idx].second) {
      throw ValidationError("weight " + name + ": expected " + shape_str(want[idx].second) + ", found " +
                            shape_str(a.shape()));
    }
    if (!a.all_finite()) throw ValidationError("weight " + name + " has non-finite values");
    ++idx;
  });
  if (!count_ok || idx != want.size()) throw ValidationError("weight set does not match the generator config");
}

GeneratorParams as_params(const GeneratorWeights& w, bool trainable) {
  GeneratorParams p;
  for (const auto& a : w.map_w) p.map_w.emplace_back(a, trainable);
  for (const auto& a : w.map_b) p.map_b.emplace_back(a, trainable);
  p.f1 = Var(w.f1, trainable);
  for (const auto& c : w.convs) {
    p.convs.push_back({Var(c.weight, trainable), Var(c.affine_w, trainable), Var(c.affine_b, trainable),
                       Var(c.bias, trainable), Var(c.noise_strength, trainable)});
  }
  for (const auto& r : w.rgbs) {
    p.rgbs.push_back(
        {Var(r.weight, trainable), Var(r.affine_w, trainable), Var(r.affine_b, trainable), Var(r.bias, trainable)});
  }
  return p;
}

GeneratorWeights values_of(const GeneratorParams& p) {
  GeneratorWeights w;
  for (const auto& a : p.map_w) w.map_w.push_back(a.value());
  for (const auto& a : p.map_b) w.map_b.push_back(a.value());
  w.f1 = p.f1.value();
  for (const auto& c : p.convs) {
    w.convs.push_back({c.weight.value(), c.affine_w.value(), c.affine_b.value(), c.bias.value(),
                       c.noise_strength.value()});
  }
  for (const auto& r : p.rgbs) {
    w.rgbs.push_back({r.weight.value(), r.affine_w.value(), r.affine_b.value(), r.bias.value()});
  }
  return w;
}

Var map_latent(const Var& z, const GeneratorParams& p) {
  if (!p.map_w.empty() && (z.value().ndim() != 2 || z.shape()[1] != p.map_w[0].shape()[1])) {
    throw ValidationError("map_latent: z must be [B," + std::to_string(p.map_w[0].shape()[1]) + "], got " +
                          shape_str(z.shape()));
  }
  Var h = z;
  for (std::size_t l = 0; l < p.map_w.size(); ++l) h = lrelu(linear(h, p.map_w[l], p.map_b[l]));
  return h;
}

NdArray map_latent(const NdArray& z, const GeneratorWeights& w) {
  NoGradGuard guard;
  return map_latent(Var::constant(z), as_params(w, false)).value();
}

namespace {

struct DemodGeom {
  bool shared;
  int batch, cout, cin, kk, h, w;
  std::size_t pixels() const { return static_cast<std::size_t>(h) * w; }
  double size() const { return static_cast<double>(batch) * cout * cin * kk * h * w; }
};

DemodGeom demod_geometry(const Var& weight, const Var& style) {
  const Shape& ws = weight.shape();
  const Shape& ss = style.shape();
  if (ss.size() != 4 || (ws.size() != 4 && ws.size() != 5)) {
    throw ValidationError("spatial demodulation: weight " + shape_str(ws) + ", style map " + shape_str(ss));
  }
  const bool shared = ws.size() == 4;
  const int off = shared ? 0 : 1;
  DemodGeom g{shared, ss[0], ws[off], ws[off + 1], ws[off + 2] * ws[off + 3], ss[2], ss[3]};
  if (g.cin != ss[1] || (!shared && ws[0] != ss[0])) {
    throw ValidationError("spatial demodulation shape mismatch: weight " + shape_str(ws) + ", style map " +
                          shape_str(ss));
  }
  return g;
}

int chunk_step(int extent, double size, double max_elems) {
  if (!(max_elems < size)) return extent;
  const double step = std::round(extent * max_elems / size);
  return std::clamp(static_cast<int>(step), 1, extent);
}

}  // namespace

Var spatial_demod_chunked(const Var& weight, const Var& style_map, double max_chunk_elems, double eps) {
  const DemodGeom g = demod_geometry(weight, style_map);
  if (!(max_chunk_elems >= 1)) throw ValidationError("max_chunk_elems must be >= 1");
  const int wbatch = g.shared ? 1 : g.batch;

  // w2[b,o,c] = sum over kernel of w^2
  NdArray w2(Shape{wbatch, g.cout, g.cin});
  {
    const double* wp = weight.value().data().data();
    for (std::size_t oc = 0; oc < w2.size(); ++oc) {
      double acc = 0.0;
      for (int t = 0; t < g.kk; ++t) acc += wp[oc * g.kk + t] * wp[oc * g.kk + t];
      w2[oc] = acc;
    }
  }
  NdArray s2(style_map.shape());
  for (std::size_t i = 0; i < s2.size(); ++i) s2[i] = style_map.value()[i] * style_map.value()[i];

  NdArray out(Shape{g.batch, g.cout, g.h, g.w});
  const int wstep = chunk_step(g.w, g.size(), max_chunk_elems);
  std::vector<double> s2c;
  std::vector<double> q;
  for (int b = 0; b < g.batch; ++b) {
    const double* w2b = w2.data().data() + (g.shared ? 0 : static_cast<std::size_t>(b) * g.cout * g.cin);
    const double* s2b = s2.data().data() + static_cast<std::size_t>(b) * g.cin * g.pixels();
    double* ob = out.data().data() + static_cast<std::size_t>(b) * g.cout * g.pixels();
    for (int x0 = 0; x0 < g.w; x0 += wstep) {
      const int cols = std::min(wstep, g.w - x0);
      const int n = g.h * cols;
      s2c.assign(static_cast<std::size_t>(g.cin) * n, 0.0);
      for (int c = 0; c < g.cin; ++c)
        for (int y = 0; y < g.h; ++y)
          std::copy_n(s2b + c * g.pixels() + static_cast<std::size_t>(y) * g.w + x0, cols,
                      s2c.data() + static_cast<std::size_t>(c) * n + static_cast<std::size_t>(y) * cols);
      q.assign(static_cast<std::size_t>(g.cout) * n, 0.0);
      detail::gemm(g.cout, n, g.cin, w2b, g.cin, s2c.data(), n, q.data(), n, false);
      for (int o = 0; o < g.cout; ++o)
        for (int y = 0; y < g.h; ++y)
          for (int x = 0; x < cols; ++x)
            ob[o * g.pixels() + static_cast<std::size_t>(y) * g.w + x0 + x] =
                1.0 / std::sqrt(q[static_cast<std::size_t>(o) * n + static_cast<std::size_t>(y) * cols + x] + eps);
    }
  }

  return make_result(std::move(out), {weight, style_map}, [g, w2, s2, max_chunk_elems](Node& self) {
    Node& pw = *self.parents[0];
    Node& ps = *self.parents[1];
    const int cstep = chunk_step(g.cin, g.size(), max_chunk_elems);
    const std::size_t hw = g.pixels();
    std::vector<double> t(static_cast<std::size_t>(g.cout) * hw);
    std::vector<double> gw2(static_cast<std::size_t>(g.cout) * g.cin);
    std::vector<double> gs(static_cast<std::size_t>(g.cin) * hw);
    for (int b = 0; b < g.batch; ++b) {
      // t = -g * d^3
      const double* gb = self.grad.data().data() + static_cast<std::size_t>(b) * g.cout * hw;
      const double* db = self.value.data().data() + static_cast<std::size_t>(b) * g.cout * hw;
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = -gb[i] * db[i] * db[i] * db[i];
      const double* w2b = w2.data().data() + (g.shared ? 0 : static_cast<std::size_t>(b) * g.cout * g.cin);
      const double* s2b = s2.data().data() + static_cast<std::size_t>(b) * g.cin * hw;
      for (int c0 = 0; c0 < g.cin; c0 += cstep) {
        const int cc = std::min(cstep, g.cin - c0);
        if (pw.requires_grad) {
          detail::gemm_nt(g.cout, cc, static_cast<int>(hw), t.data(), static_cast<int>(hw), s2b + c0 * hw,
                          static_cast<int>(hw), gw2.data() + c0, g.cin, false);
        }
        if (ps.requires_grad) {
          detail::gemm_tn(cc, static_cast<int>(hw), g.cout, w2b + c0, g.cin, t.data(), static_cast<int>(hw),
                          gs.data() + c0 * hw, static_cast<int>(hw), false);
        }
      }
      if (pw.requires_grad) {
        const double* wp = pw.value.data().data() + (g.shared ? 0 : static_cast<std::size_t>(b) * g.cout * g.cin * g.kk);
        double* gwp = pw.grad_buffer().data().data() + (g.shared ? 0 : static_cast<std::size_t>(b) * g.cout * g.cin * g.kk);
        for (std::size_t oc = 0; oc < gw2.size(); ++oc)
          for (int k = 0; k < g.kk; ++k) gwp[oc * g.kk + k] += gw2[oc] * wp[oc * g.kk + k];
      }
      if (ps.requires_grad) {
        const double* sp = ps.value.data().data() + static_cast<std::size_t>(b) * g.cin * hw;
        double* gsp = ps.grad_buffer().data().data() + static_cast<std::size_t>(b) * g.cin * hw;
        for (std::size_t i = 0; i < gs.size(); ++i) gsp[i] += sp[i] * gs[i];
      }
    }
  });
}

Var spatial_demod_coeffs(const Var& weight, const Var& style_map, double eps) {
  return spatial_demod_chunked(weight, style_map, std::numeric_limits<double>::infinity(), eps);
}

NdArray modulated_conv_nonspatial(const NdArray& x, const NdArray& style, const NdArray& weight, bool demodulate,
                                  Padding padding, double eps) {
  if (x.ndim() != 4 || style.ndim() != 2 || weight.ndim() != 4 || style.dim(0) != x.dim(0) ||
      style.dim(1) != weight.dim(1)) {
    throw ValidationError("modulated_conv_nonspatial: input " + shape_str(x.shape()) + ", style " +
                          shape_str(style.shape()) + ", weight " + shape_str(weight.shape()));
  }
  NoGradGuard guard;
  const int batch = x.dim(0);
  const int cout = weight.dim(0);
  const int cin = weight.dim(1);
  const std::size_t kk = static_cast<std::size_t>(weight.dim(2)) * weight.dim(3);
  std::vector<Var> outs;
  for (int b = 0; b < batch; ++b) {
    NdArray wm = weight;
    for (int o = 0; o < cout; ++o) {
      double ss = 0.0;
      for (int c = 0; c < cin; ++c)
        for (std::size_t t = 0; t < kk; ++t) {
          double& v = wm[(static_cast<std::size_t>(o) * cin + c) * kk + t];
          v *= style[static_cast<std::size_t>(b) * cin + c];
          ss += v * v;
        }
      if (demodulate) {
        const double d = 1.0 / std::sqrt(ss + eps);
        for (std::size_t t = 0; t < static_cast<std::size_t>(cin) * kk; ++t) wm[o * cin * kk + t] *= d;
      }
    }
    Var xb = slice(Var::constant(x), 0, b, b + 1);
    outs.push_back(Var::constant(conv2d(xb.value(), wm, padding)));
  }
  return concat(outs, 0).value();
}

Var modulated_conv(const Var& x, const Var& style, const Var& weight, bool demodulate, Padding padding, double eps,
                   double max_chunk_elems) {
  const Shape& xs = x.shape();
  if (xs.size() != 4) throw ValidationError("modulated_conv: input must be [B,C,H,W], got " + shape_str(xs));
  const int batch = xs[0];
  const int cin = xs[1];
  if (style.value().ndim() == 2) {
    if (style.shape() != Shape{batch, cin}) {
      throw ValidationError("modulated_conv: style " + shape_str(style.shape()) + " does not fit input " +
                            shape_str(xs));
    }
    Var y = conv2d(mul(x, reshape(style, {batch, cin, 1, 1})), weight, padding);
    if (!demodulate) return y;
    const int cout = weight.shape()[0];
    Var w2 = sum_over(pow2(weight), {2, 3});
    Var d = rsqrt_eps(matmul(pow2(style), transpose2d(w2)), eps);
    return mul(y, reshape(d, {batch, cout, 1, 1}));
  }
  if (style.shape() != xs) {
    throw ValidationError("modulated_conv: style map " + shape_str(style.shape()) + " must match input " +
                          shape_str(xs));
  }
  Var y = conv2d(mul(x, style), weight, padding);
  if (!demodulate) return y;
  return mul(y, spatial_demod_chunked(weight, style, max_chunk_elems, eps));
}

namespace {

Var affine(const Var& style, const Var& aw, const Var& ab) {
  const int cin = aw.shape()[0];
  const int d = aw.shape()[1];
  if (style.value().ndim() == 2) return linear(style, aw, ab);
  if (style.value().ndim() != 4 || style.shape()[1] != d) {
    throw ValidationError("style must be [B," + std::to_string(d) + "] or [B," + std::to_string(d) +
                          ",H,W], got " + shape_str(style.shape()));
  }
  return add(conv2d(style, reshape(aw, {cin, d, 1, 1}), Padding::zero), reshape(ab, {1, cin, 1, 1}));
}

Var conv_layer(const Var& x, const Var& style, const Var& noise, const ConvLayerT<Var>& l, const GeneratorConfig& cfg) {
  Var y = modulated_conv(x, affine(style, l.affine_w, l.affine_b), l.weight, true, cfg.padding, cfg.eps,
                         cfg.max_chunk_elems);
  const Shape ys = y.shape();
  if (noise.defined()) {
    if (noise.shape() != Shape{ys[0], ys[2], ys[3]}) {
      throw ValidationError("noise map " + shape_str(noise.shape()) + " does not fit layer output " + shape_str(ys));
    }
    y = add(y, mul(reshape(noise, {ys[0], 1, ys[2], ys[3]}), reshape(l.noise_strength, {1, 1, 1, 1})));
  }
  y = add(y, reshape(l.bias, {1, ys[1], 1, 1}));
  return lrelu(y);
}

Var rgb_layer(const Var& x, const Var& style, const RgbLayerT<Var>& l, const GeneratorConfig& cfg) {
  Var y = modulated_conv(x, affine(style, l.affine_w, l.affine_b), l.weight, false, cfg.padding, cfg.eps,
                         cfg.max_chunk_elems);
  return add(y, reshape(l.bias, {1, y.shape()[1], 1, 1}));
}

}  // namespace

BlockState run_blocks(BlockState state, int from, int to, const LayerInputs& in, const GeneratorParams& p,
                      const GeneratorConfig& cfg) {
  if (from < 1 || to > cfg.num_blocks + 1 || from > to) {
    throw ValidationError("run_blocks: range " + std::to_string(from) + ".." + std::to_string(to) + " invalid");
  }
  for (int j = from; j < to; ++j) {
    Var x = state.feature;
    Var rgb;
    if (j == 1) {
      x = conv_layer(x, in.style(0), in.noise(0), p.convs[0], cfg);
      rgb = rgb_layer(x, in.style(1), p.rgbs[0], cfg);
    } else {
      if (!state.rgb) throw ValidationError("rgb map missing at block " + std::to_string(j));
      x = conv_layer(x, in.style(3 * j - 4), in.noise(2 * j - 3), p.convs[2 * j - 3], cfg);
      x = conv_layer(x, in.style(3 * j - 3), in.noise(2 * j - 2), p.convs[2 * j - 2], cfg);
      rgb = add(upsample_nearest2(*state.rgb), rgb_layer(x, in.style(3 * j - 2), p.rgbs[j - 1], cfg));
    }
    state.rgb = rgb;
    state.feature = j < cfg.num_blocks ? upsample_nearest2(x) : x;
  }
  return state;
}

Var initial_feature(const GeneratorParams& p, int batch) {
  Shape s = p.f1.shape();
  s[0] = batch;
  return broadcast_to(p.f1, s);
}

Var synthesize(const VarRep& rep, const GeneratorParams& p, const GeneratorConfig& cfg) {
  validate(to_values(rep), cfg);
  const SpaceId sp = rep.space;
  const int i = sp.start_block();
  const int first_style = cfg.first_style(i);
  const int first_noise = cfg.first_noise(i);

  Var mapped;
  if (sp.has_z()) mapped = map_latent(*rep.z, p);

  LayerInputs in;
  in.style = [&](int slot) -> Var {
    if (sp.has_z()) return mapped;
    if (sp.kind == SpaceKind::W) return rep.styles[0];
    return rep.styles.at(slot - first_style);
  };
  in.noise = [&](int idx) -> Var {
    if (!sp.has_noise()) return Var();
    return rep.noises.at(idx - first_noise);
  };

  BlockState state;
  if (sp.has_feature()) {
    state.feature = *rep.feature;
    state.rgb = rep.rgb;
  } else {
    int batch = 0;
    if (rep.z) {
      batch = rep.z->shape()[0];
    } else {
      batch = rep.styles.at(0).shape()[0];
    }
    state.feature = initial_feature(p, batch);
  }
  return *run_blocks(state, i, cfg.num_blocks + 1, in, p, cfg).rgb;
}

NdArray synthesize(const LatentRep& rep, const GeneratorWeights& w, const GeneratorConfig& cfg) {
  NoGradGuard guard;
  return synthesize(to_vars(rep, false), as_params(w, false), cfg).value();
}

}  // namespace slk
