#pragma once

#include <cstddef>
#include <vector>

#include "slk/autograd.hpp"

namespace slk {

enum class Padding { zero, circular };

// Elementwise arithmetic with numpy-style broadcasting.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
// Rejects any zero in the divisor.
Var div(const Var& a, const Var& b);

Var add_scalar(const Var& a, double s);
Var scale(const Var& a, double s);
Var neg(const Var& a);
Var pow2(const Var& a);
// 1 / sqrt(x + eps)
Var rsqrt_eps(const Var& a, double eps);
Var lrelu(const Var& a, double alpha = 0.2);
Var softplus(const Var& a);

Var broadcast_to(const Var& a, const Shape& shape);
Var reshape(const Var& a, const Shape& shape);

Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var sum_over(const Var& a, std::vector<int> axes, bool keepdims = false);
Var mean_over(const Var& a, std::vector<int> axes, bool keepdims = false);

// 2x2 average pooling with stride 2 over the last two axes (floor on odd extents).
Var avg_pool2(const Var& a);
// Nearest-neighbour 2x upsampling over the last two axes.
Var upsample_nearest2(const Var& a);
// Bilinear 2x upsampling (half-pixel centres, edge clamped) over the last two axes.
Var upsample_bilinear2(const Var& a);

// out[(i + shift) mod n] = a[i] along axis.
Var roll(const Var& a, int shift, int axis);

Var matmul(const Var& a, const Var& b);
Var transpose2d(const Var& a);
// x[B,K] * w[N,K]^T + bias[N]
Var linear(const Var& x, const Var& w, const Var& bias);

// Same-size stride-1 convolution (cross-correlation). input [B,Cin,H,W],
// kernel [Cout,Cin,kh,kw] with odd kh, kw.
Var conv2d(const Var& input, const Var& kernel, Padding padding);
NdArray conv2d(const NdArray& input, const NdArray& kernel, Padding padding);

struct SortResult {
  Var values;
  // permutation[k] = flat index in the input of the k-th smallest element.
  std::vector<std::size_t> permutation;
};

// Stable ascending sort of the flattened input. Gradients flow through the
// permutation fixed at the forward pass.
SortResult sort_flat(const Var& a);

Var concat(const std::vector<Var>& parts, int axis);
Var slice(const Var& a, int axis, int begin, int end);

Var mse(const Var& a, const Var& b);

// Sums `g` down to `target` shape along broadcast axes.
NdArray reduce_to(const NdArray& g, const Shape& target);
Shape broadcast_shape(const Shape& a, const Shape& b);

}  // namespace slk
