#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slk/autograd.hpp"
#include "slk/config.hpp"

namespace slk {

enum class SpaceKind { Z, W, Wp, SWp, NWp, NSWp, FWp, FSWp, FNWp, FNSWp, FNZ };

struct SpaceId {
  SpaceKind kind = SpaceKind::Wp;
  int block = 0;  // 1-based for the F* spaces, 0 otherwise

  static SpaceId z() { return {SpaceKind::Z, 0}; }
  static SpaceId w() { return {SpaceKind::W, 0}; }
  static SpaceId wp() { return {SpaceKind::Wp, 0}; }
  static SpaceId swp() { return {SpaceKind::SWp, 0}; }
  static SpaceId nwp() { return {SpaceKind::NWp, 0}; }
  static SpaceId nswp() { return {SpaceKind::NSWp, 0}; }
  static SpaceId fwp(int i) { return {SpaceKind::FWp, i}; }
  static SpaceId fswp(int i) { return {SpaceKind::FSWp, i}; }
  static SpaceId fnwp(int i) { return {SpaceKind::FNWp, i}; }
  static SpaceId fnswp(int i) { return {SpaceKind::FNSWp, i}; }
  static SpaceId fnz(int i) { return {SpaceKind::FNZ, i}; }

  // Parses "z", "w", "wp", "swp", "nwp", "nswp", "fwp:3", ..., "fnz:2".
  static SpaceId parse(const std::string& s);
  std::string str() const;

  bool has_feature() const;
  bool has_noise() const;
  bool has_z() const { return kind == SpaceKind::Z || kind == SpaceKind::FNZ; }
  bool spatial_styles() const;
  // Number of separate style entries carried (0 for z-based spaces, 1 for W).
  int style_count(const GeneratorConfig& cfg) const;
  // Block the representation enters the network at.
  int start_block() const { return has_feature() ? block : 1; }

  bool operator==(const SpaceId&) const = default;
};

// A batched representation. Every component has a leading batch axis:
// styles [B,D] or [B,D,H,W], feature [B,C,H,W], rgb [B,3,H,W], noises [B,H,W], z [B,D].
// styles[k] is style slot first_style(start_block) + k; noises likewise.
template <class T>
struct BasicRep {
  SpaceId space;
  std::vector<T> styles;
  std::optional<T> feature;
  std::optional<T> rgb;
  std::vector<T> noises;
  std::optional<T> z;
};

using LatentRep = BasicRep<NdArray>;
using VarRep = BasicRep<Var>;

// Throws ValidationError naming the offending component, expected and found shape.
void validate(const LatentRep& rep, const GeneratorConfig& cfg);
// Non-throwing variant; empty vector means valid.
std::vector<std::string> diagnose(const LatentRep& rep, const GeneratorConfig& cfg);

int batch_size(const LatentRep& rep);

VarRep to_vars(const LatentRep& rep, bool requires_grad);
LatentRep to_values(const VarRep& rep);

// Element-wise equality of every component (bitwise on values).
bool identical(const LatentRep& a, const LatentRep& b);
double max_abs_diff(const LatentRep& a, const LatentRep& b);

// Selects sample b of a batched rep (batch axis kept, size 1).
LatentRep select_sample(const LatentRep& rep, int b);
LatentRep stack_samples(const std::vector<LatentRep>& reps);

}  // namespace slk
