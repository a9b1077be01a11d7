#pragma once

#include <string>
#include <vector>

#include "slk/ops.hpp"

namespace slk {

// Architecture of the toy generator. Blocks are numbered from 1. Block j runs
// on a grid of side base * 2^(j-1); block 1 has one conv layer, later blocks two.
struct GeneratorConfig {
  int latent_dim = 64;
  int num_blocks = 4;
  int base = 4;
  std::vector<int> channels = {64, 64, 32, 16};
  int img_channels = 3;
  int mapping_layers = 2;
  int kernel = 3;
  Padding padding = Padding::zero;
  double eps = 1e-8;
  // Element budget for one demodulation chunk.
  double max_chunk_elems = 4e8;

  void validate() const;

  int output_side() const { return base << (num_blocks - 1); }
  int grid_side(int block) const { return base << (block - 1); }
  int num_styles() const { return 3 * num_blocks - 1; }
  int num_noises() const { return 2 * num_blocks - 1; }

  // First style slot / noise index consumed by `block`.
  int first_style(int block) const { return block == 1 ? 0 : 3 * block - 4; }
  int first_noise(int block) const { return block == 1 ? 0 : 2 * block - 3; }
  int block_of_style(int slot) const { return slot < 2 ? 1 : (slot + 4) / 3; }
  int block_of_noise(int index) const { return index == 0 ? 1 : (index + 3) / 2; }

  // Channels of f_i, the feature map entering block i.
  int feature_channels(int block) const { return block == 1 ? channels[0] : channels[block - 2]; }
  // Input channels of the layer that consumes style slot `slot`.
  int style_channels(int slot) const;
};

std::string padding_name(Padding p);
Padding parse_padding(const std::string& s);

}  // namespace slk
