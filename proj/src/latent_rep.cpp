#include "slk/latent_rep.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "slk/ops.hpp"

namespace slk {

namespace {

struct KindName {
  SpaceKind kind;
  const char* name;
};

constexpr KindName kNames[] = {
    {SpaceKind::Z, "z"},       {SpaceKind::W, "w"},       {SpaceKind::Wp, "wp"},       {SpaceKind::SWp, "swp"},
    {SpaceKind::NWp, "nwp"},   {SpaceKind::NSWp, "nswp"}, {SpaceKind::FWp, "fwp"},     {SpaceKind::FSWp, "fswp"},
    {SpaceKind::FNWp, "fnwp"}, {SpaceKind::FNSWp, "fnswp"}, {SpaceKind::FNZ, "fnz"},
};

bool is_f_kind(SpaceKind k) {
  return k == SpaceKind::FWp || k == SpaceKind::FSWp || k == SpaceKind::FNWp || k == SpaceKind::FNSWp ||
         k == SpaceKind::FNZ;
}

}  // namespace

SpaceId SpaceId::parse(const std::string& s) {
  std::string lower = s;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  const auto colon = lower.find(':');
  const std::string head = lower.substr(0, colon);
  for (const auto& kn : kNames) {
    if (head != kn.name) continue;
    SpaceId id{kn.kind, 0};
    if (is_f_kind(kn.kind)) {
      if (colon == std::string::npos) throw ValidationError("space '" + s + "' needs a block index, e.g. " + head + ":3");
      try {
        std::size_t used = 0;
        id.block = std::stoi(lower.substr(colon + 1), &used);
        if (used != lower.size() - colon - 1) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ValidationError("bad block index in space '" + s + "'");
      }
      if (id.block < 1) throw ValidationError("block index must be >= 1 in space '" + s + "'");
    } else if (colon != std::string::npos) {
      throw ValidationError("space '" + head + "' takes no block index");
    }
    return id;
  }
  throw ValidationError("unknown space '" + s + "'");
}

std::string SpaceId::str() const {
  for (const auto& kn : kNames) {
    if (kn.kind == kind) return is_f_kind(kind) ? std::string(kn.name) + ":" + std::to_string(block) : kn.name;
  }
  return "?";
}

bool SpaceId::has_feature() const { return is_f_kind(kind); }

bool SpaceId::has_noise() const {
  return kind == SpaceKind::NWp || kind == SpaceKind::NSWp || kind == SpaceKind::FNWp || kind == SpaceKind::FNSWp ||
         kind == SpaceKind::FNZ;
}

bool SpaceId::spatial_styles() const {
  return kind == SpaceKind::SWp || kind == SpaceKind::NSWp || kind == SpaceKind::FSWp || kind == SpaceKind::FNSWp;
}

int SpaceId::style_count(const GeneratorConfig& cfg) const {
  if (has_z()) return 0;
  if (kind == SpaceKind::W) return 1;
  return cfg.num_styles() - cfg.first_style(start_block());
}

int batch_size(const LatentRep& rep) {
  if (rep.z) return rep.z->dim(0);
  if (!rep.styles.empty()) return rep.styles[0].dim(0);
  if (rep.feature) return rep.feature->dim(0);
  if (!rep.noises.empty()) return rep.noises[0].dim(0);
  throw ValidationError("representation has no components");
}

std::vector<std::string> diagnose(const LatentRep& rep, const GeneratorConfig& cfg) {
  std::vector<std::string> out;
  const SpaceId& sp = rep.space;
  const std::string name = sp.str();
  const int n = cfg.num_blocks;
  if (sp.has_feature() && (sp.block < 1 || sp.block > n)) {
    out.push_back("block index " + std::to_string(sp.block) + " outside 1.." + std::to_string(n));
    return out;
  }
  int batch = 0;
  try {
    batch = batch_size(rep);
  } catch (const ValidationError& e) {
    out.push_back(e.what());
    return out;
  }
  const int i = sp.start_block();
  const int d = cfg.latent_dim;

  auto expect = [&](const std::string& what, const NdArray& a, const Shape& shape) {
    if (a.shape() != shape) out.push_back(what + ": expected " + shape_str(shape) + ", found " + shape_str(a.shape()));
  };
  auto presence = [&](const std::string& what, bool present, bool wanted) {
    if (present && !wanted) out.push_back(what + " not in " + name + " formula");
    if (!present && wanted) out.push_back(what + " missing (required by " + name + ")");
  };

  int hf = cfg.grid_side(1);
  int wf = cfg.grid_side(1);
  presence("feature", rep.feature.has_value(), sp.has_feature());
  if (rep.feature && sp.has_feature()) {
    if (rep.feature->ndim() != 4) {
      out.push_back("feature: expected rank 4 [B,C,H,W], found " + shape_str(rep.feature->shape()));
      return out;
    }
    hf = rep.feature->dim(2);
    wf = rep.feature->dim(3);
    expect("feature", *rep.feature, {batch, cfg.feature_channels(i), hf, wf});
    if (i >= 2 && (hf % 2 != 0 || wf % 2 != 0)) {
      out.push_back("feature: extents must be even for block " + std::to_string(i) + ", found " +
                    shape_str(rep.feature->shape()));
    }
  }
  const auto grid = [&](int block) {
    const int scale = 1 << (block - i);
    return std::pair<int, int>{hf * scale, wf * scale};
  };

  const bool want_rgb = sp.has_feature() && i >= 2;
  presence("rgb", rep.rgb.has_value(), want_rgb);
  if (rep.rgb && want_rgb) expect("rgb", *rep.rgb, {batch, cfg.img_channels, hf / 2, wf / 2});

  presence("z", rep.z.has_value(), sp.has_z());
  if (rep.z && sp.has_z()) expect("z", *rep.z, {batch, d});

  const int n_styles = sp.style_count(cfg);
  if (static_cast<int>(rep.styles.size()) != n_styles) {
    if (n_styles == 0) {
      out.push_back("styles not in " + name + " formula");
    } else {
      out.push_back("styles: expected " + std::to_string(n_styles) + " entries, found " +
                    std::to_string(rep.styles.size()));
    }
  } else {
    for (int k = 0; k < n_styles; ++k) {
      const int slot = cfg.first_style(i) + k;
      const std::string what = "style[" + std::to_string(slot) + "]";
      if (sp.spatial_styles()) {
        const auto [h, w] = grid(cfg.block_of_style(slot));
        expect(what, rep.styles[k], {batch, d, h, w});
      } else {
        expect(what, rep.styles[k], {batch, d});
      }
    }
  }

  const int n_noises = sp.has_noise() ? cfg.num_noises() - cfg.first_noise(i) : 0;
  if (static_cast<int>(rep.noises.size()) != n_noises) {
    if (n_noises == 0) {
      out.push_back("noise maps not in " + name + " formula");
    } else {
      out.push_back("noise maps: expected " + std::to_string(n_noises) + " (blocks >= " + std::to_string(i) +
                    "), found " + std::to_string(rep.noises.size()));
    }
  } else {
    for (int k = 0; k < n_noises; ++k) {
      const int idx = cfg.first_noise(i) + k;
      const auto [h, w] = grid(cfg.block_of_noise(idx));
      expect("noise[" + std::to_string(idx) + "]", rep.noises[k], {batch, h, w});
    }
  }

  auto finite = [&](const std::string& what, const NdArray& a) {
    if (!a.all_finite()) out.push_back(what + ": non-finite values");
  };
  for (std::size_t k = 0; k < rep.styles.size(); ++k) finite("style", rep.styles[k]);
  for (std::size_t k = 0; k < rep.noises.size(); ++k) finite("noise", rep.noises[k]);
  if (rep.feature) finite("feature", *rep.feature);
  if (rep.rgb) finite("rgb", *rep.rgb);
  if (rep.z) finite("z", *rep.z);
  return out;
}

void validate(const LatentRep& rep, const GeneratorConfig& cfg) {
  const auto issues = diagnose(rep, cfg);
  if (issues.empty()) return;
  std::ostringstream msg;
  msg << "invalid " << rep.space.str() << " representation: ";
  for (std::size_t k = 0; k < issues.size(); ++k) msg << (k ? "; " : "") << issues[k];
  throw ValidationError(msg.str());
}

VarRep to_vars(const LatentRep& rep, bool requires_grad) {
  VarRep out;
  out.space = rep.space;
  for (const auto& s : rep.styles) out.styles.emplace_back(s, requires_grad);
  for (const auto& n : rep.noises) out.noises.emplace_back(n, requires_grad);
  if (rep.feature) out.feature = Var(*rep.feature, requires_grad);
  if (rep.rgb) out.rgb = Var(*rep.rgb, requires_grad);
  if (rep.z) out.z = Var(*rep.z, requires_grad);
  return out;
}

LatentRep to_values(const VarRep& rep) {
  LatentRep out;
  out.space = rep.space;
  for (const auto& s : rep.styles) out.styles.push_back(s.value());
  for (const auto& n : rep.noises) out.noises.push_back(n.value());
  if (rep.feature) out.feature = rep.feature->value();
  if (rep.rgb) out.rgb = rep.rgb->value();
  if (rep.z) out.z = rep.z->value();
  return out;
}

namespace {

template <class F>
void zip_components(const LatentRep& a, const LatentRep& b, F&& f) {
  if (a.space != b.space) throw ValidationError("spaces differ: " + a.space.str() + " vs " + b.space.str());
  if (a.styles.size() != b.styles.size() || a.noises.size() != b.noises.size() ||
      a.feature.has_value() != b.feature.has_value() || a.rgb.has_value() != b.rgb.has_value() ||
      a.z.has_value() != b.z.has_value()) {
    throw ValidationError("representations have different component sets");
  }
  for (std::size_t k = 0; k < a.styles.size(); ++k) f(a.styles[k], b.styles[k]);
  for (std::size_t k = 0; k < a.noises.size(); ++k) f(a.noises[k], b.noises[k]);
  if (a.feature) f(*a.feature, *b.feature);
  if (a.rgb) f(*a.rgb, *b.rgb);
  if (a.z) f(*a.z, *b.z);
}

}  // namespace

bool identical(const LatentRep& a, const LatentRep& b) {
  bool same = true;
  try {
    zip_components(a, b, [&](const NdArray& x, const NdArray& y) {
      if (x.shape() != y.shape() || x.vec() != y.vec()) same = false;
    });
  } catch (const ValidationError&) {
    return false;
  }
  return same;
}

double max_abs_diff(const LatentRep& a, const LatentRep& b) {
  double m = 0.0;
  zip_components(a, b, [&](const NdArray& x, const NdArray& y) { m = std::max(m, slk::max_abs_diff(x, y)); });
  return m;
}

namespace {

NdArray take_first_axis(const NdArray& a, int b) {
  NoGradGuard guard;
  return slice(Var::constant(a), 0, b, b + 1).value();
}

NdArray cat_first_axis(const std::vector<NdArray>& parts) {
  NoGradGuard guard;
  std::vector<Var> vs;
  for (const auto& p : parts) vs.push_back(Var::constant(p));
  return concat(vs, 0).value();
}

}  // namespace

LatentRep select_sample(const LatentRep& rep, int b) {
  LatentRep out;
  out.space = rep.space;
  for (const auto& s : rep.styles) out.styles.push_back(take_first_axis(s, b));
  for (const auto& n : rep.noises) out.noises.push_back(take_first_axis(n, b));
  if (rep.feature) out.feature = take_first_axis(*rep.feature, b);
  if (rep.rgb) out.rgb = take_first_axis(*rep.rgb, b);
  if (rep.z) out.z = take_first_axis(*rep.z, b);
  return out;
}

LatentRep stack_samples(const std::vector<LatentRep>& reps) {
  if (reps.empty()) throw ValidationError("nothing to stack");
  LatentRep out;
  out.space = reps[0].space;
  auto gather = [&](auto getter) {
    std::vector<NdArray> parts;
    for (const auto& r : reps) parts.push_back(getter(r));
    return cat_first_axis(parts);
  };
  for (std::size_t k = 0; k < reps[0].styles.size(); ++k)
    out.styles.push_back(gather([k](const LatentRep& r) { return r.styles.at(k); }));
  for (std::size_t k = 0; k < reps[0].noises.size(); ++k)
    out.noises.push_back(gather([k](const LatentRep& r) { return r.noises.at(k); }));
  if (reps[0].feature) out.feature = gather([](const LatentRep& r) { return r.feature.value(); });
  if (reps[0].rgb) out.rgb = gather([](const LatentRep& r) { return r.rgb.value(); });
  if (reps[0].z) out.z = gather([](const LatentRep& r) { return r.z.value(); });
  for (const auto& r : reps) {
    if (r.space != out.space) throw ValidationError("cannot stack different spaces");
  }
  return out;
}

}  // namespace slk
