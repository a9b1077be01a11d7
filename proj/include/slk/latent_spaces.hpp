#pragma once

#include <random>
#include <utility>
#include <vector>

#include "slk/generator.hpp"

namespace slk {

// Extents (H, W) of block `block`'s grid for this representation.
std::pair<int, int> block_grid(const LatentRep& rep, const GeneratorConfig& cfg, int block);
// Output image extents the representation synthesizes to.
std::pair<int, int> image_extents(const LatentRep& rep, const GeneratorConfig& cfg);

// Wp -> SWp, NWp -> NSWp, FWp(i) -> FSWp(i), FNWp(i) -> FNSWp(i).
LatentRep expand_styles_spatial(const LatentRep& rep, const GeneratorConfig& cfg);
// Inverse direction: style maps replaced by their spatial means.
LatentRep average_styles_spatial(const LatentRep& rep, const GeneratorConfig& cfg);

// Spaces reachable from `from` in a single forward step.
std::vector<SpaceId> forward_steps(const SpaceId& from, const GeneratorConfig& cfg);
// Shortest chain of single steps (excluding `from`); throws when unreachable.
std::vector<SpaceId> conversion_path(const SpaceId& from, const SpaceId& to, const GeneratorConfig& cfg);

LatentRep convert_step(const LatentRep& rep, const SpaceId& to, const GeneratorWeights& w, const GeneratorConfig& cfg);
LatentRep convert_forward(const LatentRep& rep, const SpaceId& to, const GeneratorWeights& w,
                          const GeneratorConfig& cfg);

enum class BoundaryPolicy { circular, pad_noise };

BoundaryPolicy parse_boundary(const std::string& s);

// Shifts every spatial component by (dy, dx) output pixels, then crops/extends to
// (new_h, new_w) output pixels (0 keeps the current extent). Positive shifts move
// content down/right. Each component's shift and extent must be whole cells on its grid.
LatentRep translate_crop(const LatentRep& rep, int dy, int dx, int new_h, int new_w, BoundaryPolicy policy,
                         std::mt19937_64& rng, const GeneratorConfig& cfg);

// Fresh N(0,1) noise maps for blocks >= first block of `space`, at this rep's grids.
std::vector<NdArray> random_noises(const LatentRep& rep, const SpaceId& space, const GeneratorConfig& cfg,
                                   std::mt19937_64& rng);

// Draws z ~ N(0, I) (and N(0,1) noise maps for noise spaces) and converts forward
// to `space`. FNZ spaces are sampled by spatial_training instead.
LatentRep sample_space(const SpaceId& space, int batch, const GeneratorWeights& w, const GeneratorConfig& cfg,
                       std::mt19937_64& rng);

}  // namespace slk
