#pragma once

#include <filesystem>

#include "slk/ndarray.hpp"

namespace slk {

// Binary PPM (P6, 3 channels) or PGM (P5, 1 channel), maxval <= 255, mapped to [-1,1].
// Files ending in .slk1 are read as raw arrays ([C,H,W] or [1,C,H,W]).
// Returns [1,C,H,W].
NdArray read_image(const std::filesystem::path& path);

// Accepts [C,H,W] or [1,C,H,W] with C in {1,3}; values are clamped to [-1,1] and
// rounded to 8 bits. A .slk1 extension writes the raw array instead.
void write_image(const std::filesystem::path& path, const NdArray& image);

// Mask in [0,1] as [H,W]: PGM/PPM values / 255 (channel mean for PPM), or a raw .slk1 array.
NdArray read_mask(const std::filesystem::path& path);

}  // namespace slk
