#pragma once

#include "slk/ndarray.hpp"

namespace slk {

// Resize the last two axes. Bilinear uses half-pixel centres with edge clamping;
// area averages the covered input cells (for downsampling).
NdArray resize_bilinear(const NdArray& x, int h, int w);
NdArray resize_area(const NdArray& x, int h, int w);

}  // namespace slk
