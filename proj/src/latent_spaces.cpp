#include "slk/latent_spaces.hpp"

#include <deque>
#include <map>

namespace slk {

std::pair<int, int> block_grid(const LatentRep& rep, const GeneratorConfig& cfg, int block) {
  const int i = rep.space.start_block();
  if (rep.space.has_feature()) {
    if (!rep.feature) throw ValidationError("feature missing (required by " + rep.space.str() + ")");
    if (block < i) {
      const int div = 1 << (i - block);
      return {rep.feature->dim(2) / div, rep.feature->dim(3) / div};
    }
    const int mul = 1 << (block - i);
    return {rep.feature->dim(2) * mul, rep.feature->dim(3) * mul};
  }
  return {cfg.grid_side(block), cfg.grid_side(block)};
}

std::pair<int, int> image_extents(const LatentRep& rep, const GeneratorConfig& cfg) {
  return block_grid(rep, cfg, cfg.num_blocks);
}

namespace {

SpaceKind spatial_kind(SpaceKind k) {
  switch (k) {
    case SpaceKind::Wp: return SpaceKind::SWp;
    case SpaceKind::NWp: return SpaceKind::NSWp;
    case SpaceKind::FWp: return SpaceKind::FSWp;
    case SpaceKind::FNWp: return SpaceKind::FNSWp;
    default: throw ValidationError("no spatial counterpart");
  }
}

SpaceKind vector_kind(SpaceKind k) {
  switch (k) {
    case SpaceKind::SWp: return SpaceKind::Wp;
    case SpaceKind::NSWp: return SpaceKind::NWp;
    case SpaceKind::FSWp: return SpaceKind::FWp;
    case SpaceKind::FNSWp: return SpaceKind::FNWp;
    default: throw ValidationError("no vector counterpart");
  }
}

SpaceKind with_feature(SpaceKind k) {
  switch (k) {
    case SpaceKind::Wp: return SpaceKind::FWp;
    case SpaceKind::SWp: return SpaceKind::FSWp;
    case SpaceKind::NWp: return SpaceKind::FNWp;
    case SpaceKind::NSWp: return SpaceKind::FNSWp;
    default: throw ValidationError("no feature counterpart");
  }
}

NdArray replicate_map(const NdArray& v, int h, int w) {
  const int b = v.dim(0);
  const int d = v.dim(1);
  NdArray out(Shape{b, d, h, w});
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int i = 0; i < b * d; ++i) std::fill_n(out.data().data() + i * hw, hw, v[i]);
  return out;
}

template <class F>
LatentRep with_grad_off(F&& f) {
  NoGradGuard guard;
  return f();
}

}  // namespace

LatentRep expand_styles_spatial(const LatentRep& rep, const GeneratorConfig& cfg) {
  validate(rep, cfg);
  LatentRep out = rep;
  out.space.kind = spatial_kind(rep.space.kind);
  const int first = cfg.first_style(rep.space.start_block());
  for (std::size_t k = 0; k < rep.styles.size(); ++k) {
    const auto [h, w] = block_grid(rep, cfg, cfg.block_of_style(first + static_cast<int>(k)));
    out.styles[k] = replicate_map(rep.styles[k], h, w);
  }
  return out;
}

LatentRep average_styles_spatial(const LatentRep& rep, const GeneratorConfig& cfg) {
  validate(rep, cfg);
  LatentRep out = rep;
  out.space.kind = vector_kind(rep.space.kind);
  NoGradGuard guard;
  for (auto& s : out.styles) s = mean_over(Var::constant(s), {2, 3}).value();
  return out;
}

std::vector<SpaceId> forward_steps(const SpaceId& from, const GeneratorConfig& cfg) {
  std::vector<SpaceId> out;
  switch (from.kind) {
    case SpaceKind::Z: out.push_back(SpaceId::w()); break;
    case SpaceKind::W: out.push_back(SpaceId::wp()); break;
    case SpaceKind::Wp:
    case SpaceKind::NWp:
      out.push_back({spatial_kind(from.kind), 0});
      out.push_back({with_feature(from.kind), 1});
      break;
    case SpaceKind::SWp:
    case SpaceKind::NSWp: out.push_back({with_feature(from.kind), 1}); break;
    case SpaceKind::FWp:
    case SpaceKind::FNWp:
      out.push_back({spatial_kind(from.kind), from.block});
      if (from.block < cfg.num_blocks) out.push_back({from.kind, from.block + 1});
      break;
    case SpaceKind::FSWp:
    case SpaceKind::FNSWp:
      if (from.block < cfg.num_blocks) out.push_back({from.kind, from.block + 1});
      break;
    case SpaceKind::FNZ:
      out.push_back(SpaceId::fnwp(from.block));
      if (from.block < cfg.num_blocks) out.push_back(SpaceId::fnz(from.block + 1));
      break;
  }
  return out;
}

std::vector<SpaceId> conversion_path(const SpaceId& from, const SpaceId& to, const GeneratorConfig& cfg) {
  if (from == to) return {};
  auto key = [](const SpaceId& s) { return std::pair<int, int>{static_cast<int>(s.kind), s.block}; };
  std::map<std::pair<int, int>, SpaceId> parent;
  std::deque<SpaceId> queue{from};
  parent.emplace(key(from), from);
  while (!queue.empty()) {
    const SpaceId cur = queue.front();
    queue.pop_front();
    for (const SpaceId& next : forward_steps(cur, cfg)) {
      if (!parent.emplace(key(next), cur).second) continue;
      if (next == to) {
        std::vector<SpaceId> path{to};
        SpaceId s = cur;
        while (!(s == from)) {
          path.push_back(s);
          s = parent.at(key(s));
        }
        return {path.rbegin(), path.rend()};
      }
      queue.push_back(next);
    }
  }
  throw ValidationError("no forward conversion from " + from.str() + " to " + to.str() +
                        " (backward moves and noise-family changes are undefined)");
}

LatentRep convert_step(const LatentRep& rep, const SpaceId& to, const GeneratorWeights& w, const GeneratorConfig& cfg) {
  const SpaceId from = rep.space;
  const auto steps = forward_steps(from, cfg);
  if (std::find(steps.begin(), steps.end(), to) == steps.end()) {
    throw ValidationError(from.str() + " -> " + to.str() + " is not a single forward step");
  }
  return with_grad_off([&]() -> LatentRep {
    LatentRep out;
    out.space = to;
    if (from.kind == SpaceKind::Z) {
      out.styles.push_back(map_latent(*rep.z, w));
      return out;
    }
    if (from.kind == SpaceKind::W) {
      out.styles.assign(cfg.num_styles(), rep.styles[0]);
      return out;
    }
    if (to.kind == SpaceKind::FNWp && from.kind == SpaceKind::FNZ) {
      out = rep;
      out.space = to;
      out.z.reset();
      const NdArray mapped = map_latent(*rep.z, w);
      out.styles.assign(cfg.num_styles() - cfg.first_style(from.block), mapped);
      return out;
    }
    if (to.block == from.block && to.spatial_styles() && !from.spatial_styles()) {
      LatentRep e = expand_styles_spatial(rep, cfg);
      return e;
    }
    if (!from.has_feature()) {
      // attach the learned f1
      out = rep;
      out.space = to;
      out.feature = as_params(w, false).f1.value();
      Shape s = out.feature->shape();
      s[0] = batch_size(rep);
      out.feature = broadcast_to(Var::constant(*out.feature), s).value();
      return out;
    }
    // run block i
    const int i = from.block;
    const GeneratorParams p = as_params(w, false);
    const int first_style = cfg.first_style(i);
    const int first_noise = cfg.first_noise(i);
    Var mapped;
    if (from.has_z()) mapped = Var::constant(map_latent(*rep.z, w));
    LayerInputs in;
    in.style = [&](int slot) -> Var {
      if (from.has_z()) return mapped;
      return Var::constant(rep.styles.at(slot - first_style));
    };
    in.noise = [&](int idx) -> Var {
      if (!from.has_noise()) return Var();
      return Var::constant(rep.noises.at(idx - first_noise));
    };
    BlockState state;
    state.feature = Var::constant(*rep.feature);
    if (rep.rgb) state.rgb = Var::constant(*rep.rgb);
    const BlockState next = run_blocks(state, i, i + 1, in, p, cfg);
    out.space = to;
    out.feature = next.feature.value();
    out.rgb = next.rgb->value();
    out.z = rep.z;
    const int drop_styles = cfg.first_style(i + 1) - first_style;
    const int drop_noises = cfg.first_noise(i + 1) - first_noise;
    if (!from.has_z()) out.styles.assign(rep.styles.begin() + drop_styles, rep.styles.end());
    if (from.has_noise()) out.noises.assign(rep.noises.begin() + drop_noises, rep.noises.end());
    return out;
  });
}

LatentRep convert_forward(const LatentRep& rep, const SpaceId& to, const GeneratorWeights& w,
                          const GeneratorConfig& cfg) {
  validate(rep, cfg);
  if (to.has_feature() && (to.block < 1 || to.block > cfg.num_blocks)) {
    throw ValidationError("target block " + std::to_string(to.block) + " outside 1.." +
                          std::to_string(cfg.num_blocks));
  }
  LatentRep cur = rep;
  for (const SpaceId& step : conversion_path(rep.space, to, cfg)) cur = convert_step(cur, step, w, cfg);
  validate(cur, cfg);
  return cur;
}

BoundaryPolicy parse_boundary(const std::string& s) {
  if (s == "circular") return BoundaryPolicy::circular;
  if (s == "pad_noise" || s == "pad-noise") return BoundaryPolicy::pad_noise;
  throw ValidationError("unknown boundary policy '" + s + "' (circular|pad_noise)");
}

namespace {

struct CellPlan {
  int sy, sx, h, w;
};

CellPlan plan_for(const std::string& what, int cell, int dy, int dx, int new_h, int new_w) {
  auto whole = [&](int v, const char* label) {
    if (v % cell != 0) {
      throw ValidationError(std::string(label) + " " + std::to_string(v) + " px is not a whole number of " + what +
                            " cells (" + std::to_string(cell) + " px each)");
    }
    return v / cell;
  };
  return {whole(dy, "shift"), whole(dx, "shift"), whole(new_h, "extent"), whole(new_w, "extent")};
}

// a: [..., H, W]
NdArray shift_map(const NdArray& a, const CellPlan& pl, bool fresh_noise, BoundaryPolicy policy,
                  std::mt19937_64& rng) {
  const int nd = a.ndim();
  const int h = a.dim(-2);
  const int w = a.dim(-1);
  Shape os = a.shape();
  os[nd - 2] = pl.h;
  os[nd - 1] = pl.w;
  NdArray out(os);
  const std::size_t lead = a.size() / (static_cast<std::size_t>(h) * w);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l < lead; ++l) {
    const double* src = a.data().data() + l * h * w;
    double* dst = out.data().data() + l * pl.h * pl.w;
    for (int y = 0; y < pl.h; ++y)
      for (int x = 0; x < pl.w; ++x) {
        int iy = y - pl.sy;
        int ix = x - pl.sx;
        if (policy == BoundaryPolicy::circular) {
          iy = ((iy % h) + h) % h;
          ix = ((ix % w) + w) % w;
        } else if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
          if (fresh_noise) {
            dst[y * pl.w + x] = normal(rng);
            continue;
          }
          iy = std::clamp(iy, 0, h - 1);
          ix = std::clamp(ix, 0, w - 1);
        }
        dst[y * pl.w + x] = src[iy * w + ix];
      }
  }
  return out;
}

}  // namespace

LatentRep translate_crop(const LatentRep& rep, int dy, int dx, int new_h, int new_w, BoundaryPolicy policy,
                         std::mt19937_64& rng, const GeneratorConfig& cfg) {
  validate(rep, cfg);
  const SpaceId sp = rep.space;
  if (!sp.has_feature() && !sp.spatial_styles() && !sp.has_noise()) {
    throw ValidationError(sp.str() + " has no spatial components to translate");
  }
  const auto [img_h, img_w] = image_extents(rep, cfg);
  if (new_h == 0) new_h = img_h;
  if (new_w == 0) new_w = img_w;
  if (new_h < 0 || new_w < 0) throw ValidationError("new extents must be positive");
  if (!sp.has_feature() && (new_h != img_h || new_w != img_w)) {
    throw ValidationError("changing extents needs a feature map (" + sp.str() + " starts from the fixed learned input)");
  }
  const int n = cfg.num_blocks;
  const auto cell_of = [n](int block) { return 1 << (n - block); };
  const int i = sp.start_block();

  // Validate every component grid before touching data.
  std::vector<std::pair<std::string, int>> grids;
  if (rep.feature) grids.emplace_back("feature", cell_of(i));
  if (rep.rgb) grids.emplace_back("rgb", cell_of(i - 1));
  if (sp.spatial_styles()) {
    for (std::size_t k = 0; k < rep.styles.size(); ++k)
      grids.emplace_back("style", cell_of(cfg.block_of_style(cfg.first_style(i) + static_cast<int>(k))));
  }
  for (std::size_t k = 0; k < rep.noises.size(); ++k)
    grids.emplace_back("noise", cell_of(cfg.block_of_noise(cfg.first_noise(i) + static_cast<int>(k))));
  for (const auto& [what, cell] : grids) plan_for(what, cell, dy, dx, new_h, new_w);

  LatentRep out = rep;
  if (rep.feature) {
    out.feature = shift_map(*rep.feature, plan_for("feature", cell_of(i), dy, dx, new_h, new_w), false, policy, rng);
  }
  if (rep.rgb) {
    out.rgb = shift_map(*rep.rgb, plan_for("rgb", cell_of(i - 1), dy, dx, new_h, new_w), false, policy, rng);
  }
  if (sp.spatial_styles()) {
    for (std::size_t k = 0; k < rep.styles.size(); ++k) {
      const int cell = cell_of(cfg.block_of_style(cfg.first_style(i) + static_cast<int>(k)));
      out.styles[k] = shift_map(rep.styles[k], plan_for("style", cell, dy, dx, new_h, new_w), false, policy, rng);
    }
  }
  for (std::size_t k = 0; k < rep.noises.size(); ++k) {
    const int cell = cell_of(cfg.block_of_noise(cfg.first_noise(i) + static_cast<int>(k)));
    out.noises[k] = shift_map(rep.noises[k], plan_for("noise", cell, dy, dx, new_h, new_w), true, policy, rng);
  }
  validate(out, cfg);
  return out;
}

std::vector<NdArray> random_noises(const LatentRep& rep, const SpaceId& space, const GeneratorConfig& cfg,
                                   std::mt19937_64& rng) {
  if (space.start_block() != rep.space.start_block()) {
    throw ValidationError("noise layout of " + space.str() + " does not match " + rep.space.str());
  }
  const int batch = batch_size(rep);
  std::vector<NdArray> out;
  for (int idx = cfg.first_noise(space.start_block()); idx < cfg.num_noises(); ++idx) {
    const auto [h, w] = block_grid(rep, cfg, cfg.block_of_noise(idx));
    out.push_back(NdArray::randn({batch, h, w}, rng));
  }
  return out;
}

LatentRep sample_space(const SpaceId& space, int batch, const GeneratorWeights& w, const GeneratorConfig& cfg,
                       std::mt19937_64& rng) {
  if (batch < 1) throw ValidationError("batch must be >= 1");
  if (space.kind == SpaceKind::FNZ) throw ValidationError("fnz spaces are sampled with a feature distribution");
  LatentRep z;
  z.space = SpaceId::z();
  z.z = NdArray::randn({batch, cfg.latent_dim}, rng);
  if (space.kind == SpaceKind::Z) return z;
  if (!space.has_noise()) return convert_forward(z, space, w, cfg);
  LatentRep nwp = convert_forward(z, SpaceId::wp(), w, cfg);
  nwp.space = SpaceId::nwp();
  nwp.noises = random_noises(nwp, nwp.space, cfg, rng);
  return convert_forward(nwp, space, w, cfg);
}

}  // namespace slk
