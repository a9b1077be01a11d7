#include "slk/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "gemm.hpp"
#include "slk/resample.hpp"

namespace slk {

namespace {

using Strides = std::vector<std::size_t>;

// Strides of `in` viewed at rank/extents of `out`; 0 on broadcast axes.
Strides broadcast_strides(const Shape& in, const Shape& out) {
  const std::size_t r = out.size();
  Strides s(r, 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t din = in.size() - 1 - k;
    const std::size_t dout = r - 1 - k;
    s[dout] = in[din] == 1 && out[dout] != 1 ? 0 : stride;
    stride *= static_cast<std::size_t>(in[din]);
  }
  return s;
}

template <class F>
void for_each_broadcast(const Shape& out, const Strides& sa, const Strides& sb, F&& f) {
  const std::size_t total = numel(out);
  if (total == 0) return;
  const std::size_t r = out.size();
  const std::size_t inner = static_cast<std::size_t>(out[r - 1]);
  const std::size_t outer = total / inner;
  std::vector<int> idx(r, 0);
  std::size_t oa = 0;
  std::size_t ob = 0;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t x = 0; x < inner; ++x) f(o * inner + x, oa + x * sa[r - 1], ob + x * sb[r - 1]);
    for (int d = static_cast<int>(r) - 2; d >= 0; --d) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < out[d]) break;
      oa -= sa[d] * static_cast<std::size_t>(out[d]);
      ob -= sb[d] * static_cast<std::size_t>(out[d]);
      idx[d] = 0;
    }
  }
}

template <class Op>
NdArray broadcast_apply(const NdArray& a, const NdArray& b, Op op) {
  if (a.shape() == b.shape()) {
    NdArray out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = op(a[i], b[i]);
    return out;
  }
  const Shape shape = broadcast_shape(a.shape(), b.shape());
  NdArray out(shape);
  const Strides sa = broadcast_strides(a.shape(), shape);
  const Strides sb = broadcast_strides(b.shape(), shape);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for_each_broadcast(shape, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) { po[o] = op(pa[ia], pb[ib]); });
  return out;
}

NdArray expand(const NdArray& a, const Shape& target) {
  if (a.shape() == target) return a;
  NdArray out(target);
  const Strides sa = broadcast_strides(a.shape(), target);
  const Strides zero(target.size(), 0);
  const double* pa = a.data().data();
  double* po = out.data().data();
  for_each_broadcast(target, sa, zero, [&](std::size_t o, std::size_t ia, std::size_t) { po[o] = pa[ia]; });
  return out;
}

void accumulate(Node& parent, const NdArray& g) {
  if (!parent.requires_grad) return;
  NdArray& buf = parent.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

template <class Fwd, class Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  NdArray out(a.shape());
  const NdArray& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  return make_result(std::move(out), {a}, [deriv](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    NdArray& buf = p.grad_buffer();
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
  });
}

int normalize_axis(int axis, int ndim) {
  if (axis < 0) axis += ndim;
  if (axis < 0 || axis >= ndim) throw ValidationError("axis out of range");
  return axis;
}

struct AxisSplit {
  std::size_t outer;
  std::size_t extent;
  std::size_t inner;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r{1, static_cast<std::size_t>(s[axis]), 1};
  for (int d = 0; d < axis; ++d) r.outer *= static_cast<std::size_t>(s[d]);
  for (std::size_t d = axis + 1; d < s.size(); ++d) r.inner *= static_cast<std::size_t>(s[d]);
  return r;
}

void require_rank_at_least(const Var& a, int rank, const char* op) {
  if (a.value().ndim() < rank) {
    throw ValidationError(std::string(op) + " needs rank >= " + std::to_string(rank) + ", got " + shape_str(a.shape()));
  }
}

// Taps along one axis: out[o] = sum w * in[i].
struct Taps {
  int in_n = 0;
  int out_n = 0;
  std::vector<std::tuple<int, int, double>> entries;  // (out, in, weight)
};

NdArray apply_taps(const NdArray& x, int axis, const Taps& taps, bool transpose) {
  const int from = transpose ? taps.out_n : taps.in_n;
  const int to = transpose ? taps.in_n : taps.out_n;
  if (x.dim(axis) != from) throw ValidationError("resample extent mismatch");
  Shape shape = x.shape();
  shape[axis] = to;
  NdArray out(shape, 0.0);
  const AxisSplit si = split_at(x.shape(), axis);
  for (std::size_t o = 0; o < si.outer; ++o) {
    const double* src = x.data().data() + o * si.extent * si.inner;
    double* dst = out.data().data() + o * static_cast<std::size_t>(to) * si.inner;
    for (const auto& [oi, ii, w] : taps.entries) {
      const int s = transpose ? oi : ii;
      const int d = transpose ? ii : oi;
      const double* sp = src + static_cast<std::size_t>(s) * si.inner;
      double* dp = dst + static_cast<std::size_t>(d) * si.inner;
      for (std::size_t k = 0; k < si.inner; ++k) dp[k] += w * sp[k];
    }
  }
  return out;
}

Taps bilinear_taps(int in_n, int out_n) {
  Taps t{in_n, out_n, {}};
  const double ratio = static_cast<double>(in_n) / out_n;
  for (int o = 0; o < out_n; ++o) {
    const double src = (o + 0.5) * ratio - 0.5;
    const int i0 = static_cast<int>(std::floor(src));
    const double frac = src - i0;
    const int a = std::clamp(i0, 0, in_n - 1);
    const int b = std::clamp(i0 + 1, 0, in_n - 1);
    t.entries.emplace_back(o, a, 1.0 - frac);
    t.entries.emplace_back(o, b, frac);
  }
  return t;
}

Taps area_taps(int in_n, int out_n) {
  Taps t{in_n, out_n, {}};
  const double ratio = static_cast<double>(in_n) / out_n;
  for (int o = 0; o < out_n; ++o) {
    const double lo = o * ratio;
    const double hi = (o + 1) * ratio;
    for (int i = static_cast<int>(std::floor(lo)); i < static_cast<int>(std::ceil(hi)) && i < in_n; ++i) {
      const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
      if (overlap > 0) t.entries.emplace_back(o, i, overlap / ratio);
    }
  }
  return t;
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t k = 0; k < r; ++k) {
    const int da = k < a.size() ? a[a.size() - 1 - k] : 1;
    const int db = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ValidationError("shapes " + shape_str(a) + " and " + shape_str(b) + " are not broadcastable");
    }
    out[r - 1 - k] = std::max(da, db);
  }
  return out;
}

NdArray reduce_to(const NdArray& g, const Shape& target) {
  if (g.shape() == target) return g;
  NdArray out(target, 0.0);
  const Strides st = broadcast_strides(target, g.shape());
  const Strides zero(g.shape().size(), 0);
  const double* pg = g.data().data();
  double* po = out.data().data();
  for_each_broadcast(g.shape(), st, zero, [&](std::size_t o, std::size_t it, std::size_t) { po[it] += pg[o]; });
  return out;
}

Var add(const Var& a, const Var& b) {
  NdArray out = broadcast_apply(a.value(), b.value(), [](double x, double y) { return x + y; });
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) accumulate(pa, reduce_to(self.grad, pa.value.shape()));
    if (pb.requires_grad) accumulate(pb, reduce_to(self.grad, pb.value.shape()));
  });
}

Var sub(const Var& a, const Var& b) {
  NdArray out = broadcast_apply(a.value(), b.value(), [](double x, double y) { return x - y; });
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) accumulate(pa, reduce_to(self.grad, pa.value.shape()));
    if (pb.requires_grad) {
      NdArray g = reduce_to(self.grad, pb.value.shape());
      for (auto& v : g.data()) v = -v;
      accumulate(pb, g);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  NdArray out = broadcast_apply(a.value(), b.value(), [](double x, double y) { return x * y; });
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto times = [](double x, double y) { return x * y; };
    if (pa.requires_grad) accumulate(pa, reduce_to(broadcast_apply(self.grad, pb.value, times), pa.value.shape()));
    if (pb.requires_grad) accumulate(pb, reduce_to(broadcast_apply(self.grad, pa.value, times), pb.value.shape()));
  });
}

Var div(const Var& a, const Var& b) {
  for (double v : b.value().data()) {
    if (v == 0.0) throw ValidationError("division by zero (use rsqrt_eps for guarded forms)");
  }
  NdArray out = broadcast_apply(a.value(), b.value(), [](double x, double y) { return x / y; });
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      accumulate(pa, reduce_to(broadcast_apply(self.grad, pb.value, [](double g, double y) { return g / y; }),
                               pa.value.shape()));
    }
    if (pb.requires_grad) {
      NdArray gq(self.value.shape());
      for (std::size_t i = 0; i < gq.size(); ++i) gq[i] = -self.grad[i] * self.value[i];
      accumulate(pb, reduce_to(broadcast_apply(gq, pb.value, [](double g, double y) { return g / y; }),
                               pb.value.shape()));
    }
  });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var scale(const Var& a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var pow2(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var rsqrt_eps(const Var& a, double eps) {
  return unary(
      a, [eps](double x) { return 1.0 / std::sqrt(x + eps); },
      [](double, double y) { return -0.5 * y * y * y; });
}

Var lrelu(const Var& a, double alpha) {
  return unary(
      a, [alpha](double x) { return x >= 0 ? x : alpha * x; },
      [alpha](double x, double) { return x >= 0 ? 1.0 : alpha; });
}

Var softplus(const Var& a) {
  return unary(
      a, [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var broadcast_to(const Var& a, const Shape& shape) {
  if (broadcast_shape(a.shape(), shape) != shape) {
    throw ValidationError("cannot broadcast " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  return make_result(expand(a.value(), shape), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    accumulate(p, reduce_to(self.grad, p.value.shape()));
  });
}

Var reshape(const Var& a, const Shape& shape) {
  return make_result(a.value().reshaped(shape), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    accumulate(p, self.grad);
  });
}

Var sum_all(const Var& a) {
  return make_result(NdArray::scalar(sum(a.value())), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    NdArray& buf = p.grad_buffer();
    const double g = self.grad[0];
    for (auto& v : buf.data()) v += g;
  });
}

Var mean_all(const Var& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size())); }

Var sum_over(const Var& a, std::vector<int> axes, bool keepdims) {
  const int nd = a.value().ndim();
  Shape kept = a.shape();
  for (int& ax : axes) {
    ax = normalize_axis(ax, nd);
    kept[ax] = 1;
  }
  Var reduced = make_result(reduce_to(a.value(), kept), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    accumulate(p, expand(self.grad, p.value.shape()));
  });
  if (keepdims) return reduced;
  Shape squeezed;
  for (int d = 0; d < nd; ++d) {
    if (std::find(axes.begin(), axes.end(), d) == axes.end()) squeezed.push_back(a.shape()[d]);
  }
  if (squeezed.empty()) squeezed.push_back(1);
  return reshape(reduced, squeezed);
}

Var mean_over(const Var& a, std::vector<int> axes, bool keepdims) {
  std::size_t count = 1;
  const int nd = a.value().ndim();
  for (int ax : axes) count *= static_cast<std::size_t>(a.shape()[normalize_axis(ax, nd)]);
  return scale(sum_over(a, std::move(axes), keepdims), 1.0 / static_cast<double>(count));
}

Var avg_pool2(const Var& a) {
  require_rank_at_least(a, 2, "avg_pool2");
  const Shape& s = a.shape();
  const int h = s[s.size() - 2];
  const int w = s[s.size() - 1];
  const int ho = h / 2;
  const int wo = w / 2;
  if (ho == 0 || wo == 0) throw ValidationError("avg_pool2 on extents smaller than 2: " + shape_str(s));
  Shape os = s;
  os[os.size() - 2] = ho;
  os[os.size() - 1] = wo;
  const std::size_t lead = numel(s) / (static_cast<std::size_t>(h) * w);
  NdArray out(os);
  const double* x = a.value().data().data();
  for (std::size_t l = 0; l < lead; ++l) {
    const double* src = x + l * h * w;
    double* dst = out.data().data() + l * ho * wo;
    for (int y = 0; y < ho; ++y)
      for (int xx = 0; xx < wo; ++xx)
        dst[y * wo + xx] = 0.25 * (src[(2 * y) * w + 2 * xx] + src[(2 * y) * w + 2 * xx + 1] +
                                   src[(2 * y + 1) * w + 2 * xx] + src[(2 * y + 1) * w + 2 * xx + 1]);
  }
  return make_result(std::move(out), {a}, [lead, h, w, ho, wo](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    NdArray& buf = p.grad_buffer();
    for (std::size_t l = 0; l < lead; ++l) {
      const double* g = self.grad.data().data() + l * ho * wo;
      double* dst = buf.data().data() + l * h * w;
      for (int y = 0; y < ho; ++y)
        for (int xx = 0; xx < wo; ++xx) {
          const double v = 0.25 * g[y * wo + xx];
          dst[(2 * y) * w + 2 * xx] += v;
          dst[(2 * y) * w + 2 * xx + 1] += v;
          dst[(2 * y + 1) * w + 2 * xx] += v;
          dst[(2 * y + 1) * w + 2 * xx + 1] += v;
        }
    }
  });
}

Var upsample_nearest2(const Var& a) {
  require_rank_at_least(a, 2, "upsample_nearest2");
  const Shape& s = a.shape();
  const int h = s[s.size() - 2];
  const int w = s[s.size() - 1];
  Shape os = s;
  os[os.size() - 2] = 2 * h;
  os[os.size() - 1] = 2 * w;
  const std::size_t lead = numel(s) / (static_cast<std::size_t>(h) * w);
  NdArray out(os);
  const double* x = a.value().data().data();
  for (std::size_t l = 0; l < lead; ++l) {
    const double* src = x + l * h * w;
    double* dst = out.data().data() + l * 4 * h * w;
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx) dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
  }
  return make_result(std::move(out), {a}, [lead, h, w](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    NdArray& buf = p.grad_buffer();
    for (std::size_t l = 0; l < lead; ++l) {
      const double* g = self.grad.data().data() + l * 4 * h * w;
      double* dst = buf.data().data() + l * h * w;
      for (int y = 0; y < 2 * h; ++y)
        for (int xx = 0; xx < 2 * w; ++xx) dst[(y / 2) * w + xx / 2] += g[y * 2 * w + xx];
    }
  });
}

Var upsample_bilinear2(const Var& a) {
  require_rank_at_least(a, 2, "upsample_bilinear2");
  const int nd = a.value().ndim();
  const int h = a.shape()[nd - 2];
  const int w = a.shape()[nd - 1];
  Taps th = bilinear_taps(h, 2 * h);
  Taps tw = bilinear_taps(w, 2 * w);
  NdArray out = apply_taps(apply_taps(a.value(), nd - 1, tw, false), nd - 2, th, false);
  return make_result(std::move(out), {a}, [th, tw, nd](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    accumulate(p, apply_taps(apply_taps(self.grad, nd - 2, th, true), nd - 1, tw, true));
  });
}

NdArray resize_bilinear(const NdArray& x, int h, int w) {
  const int nd = x.ndim();
  NdArray out = x;
  if (x.dim(-1) != w) out = apply_taps(out, nd - 1, bilinear_taps(x.dim(-1), w), false);
  if (x.dim(-2) != h) out = apply_taps(out, nd - 2, bilinear_taps(x.dim(-2), h), false);
  return out;
}

NdArray resize_area(const NdArray& x, int h, int w) {
  const int nd = x.ndim();
  NdArray out = x;
  if (x.dim(-1) != w) out = apply_taps(out, nd - 1, area_taps(x.dim(-1), w), false);
  if (x.dim(-2) != h) out = apply_taps(out, nd - 2, area_taps(x.dim(-2), h), false);
  return out;
}

Var roll(const Var& a, int shift, int axis) {
  axis = normalize_axis(axis, a.value().ndim());
  const AxisSplit sp = split_at(a.shape(), axis);
  const long n = static_cast<long>(sp.extent);
  const std::size_t s = static_cast<std::size_t>(((shift % n) + n) % n);
  NdArray out(a.shape());
  const double* x = a.value().data().data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.extent; ++i) {
      const std::size_t j = (i + s) % sp.extent;
      std::copy_n(x + (o * sp.extent + i) * sp.inner, sp.inner, out.data().data() + (o * sp.extent + j) * sp.inner);
    }
  return make_result(std::move(out), {a}, [sp, s](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    NdArray& buf = p.grad_buffer();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < sp.extent; ++i) {
        const std::size_t j = (i + s) % sp.extent;
        const double* g = self.grad.data().data() + (o * sp.extent + j) * sp.inner;
        double* d = buf.data().data() + (o * sp.extent + i) * sp.inner;
        for (std::size_t k = 0; k < sp.inner; ++k) d[k] += g[k];
      }
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.value().ndim() != 2 || b.value().ndim() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ValidationError("matmul shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const int m = a.shape()[0];
  const int k = a.shape()[1];
  const int n = b.shape()[1];
  NdArray out(Shape{m, n});
  detail::gemm(m, n, k, a.value().data().data(), k, b.value().data().data(), n, out.data().data(), n, false);
  return make_result(std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      detail::gemm_nt(m, k, n, self.grad.data().data(), n, pb.value.data().data(), n,
                      pa.grad_buffer().data().data(), k, true);
    }
    if (pb.requires_grad) {
      detail::gemm_tn(k, n, m, pa.value.data().data(), k, self.grad.data().data(), n,
                      pb.grad_buffer().data().data(), n, true);
    }
  });
}

Var transpose2d(const Var& a) {
  if (a.value().ndim() != 2) throw ValidationError("transpose2d needs rank 2, got " + shape_str(a.shape()));
  const int r = a.shape()[0];
  const int c = a.shape()[1];
  NdArray out(Shape{c, r});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(j) * r + i] = a.value()[static_cast<std::size_t>(i) * c + j];
  return make_result(std::move(out), {a}, [r, c](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    NdArray& buf = p.grad_buffer();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) buf[static_cast<std::size_t>(i) * c + j] += self.grad[static_cast<std::size_t>(j) * r + i];
  });
}

Var linear(const Var& x, const Var& w, const Var& bias) { return add(matmul(x, transpose2d(w)), bias); }

namespace {

struct ConvGeom {
  int batch, cin, h, w, cout, kh, kw;
  Padding padding;
  int patch() const { return cin * kh * kw; }
  int pixels() const { return h * w; }
};

// cols[(c,i,j), (y,x)]
void im2col(const ConvGeom& g, const double* x, double* cols) {
  const int ph = g.kh / 2;
  const int pw = g.kw / 2;
  for (int c = 0; c < g.cin; ++c)
    for (int i = 0; i < g.kh; ++i)
      for (int j = 0; j < g.kw; ++j) {
        double* row = cols + (static_cast<std::size_t>(c) * g.kh * g.kw + i * g.kw + j) * g.pixels();
        const double* xc = x + static_cast<std::size_t>(c) * g.pixels();
        for (int y = 0; y < g.h; ++y) {
          int sy = y + i - ph;
          if (g.padding == Padding::circular) {
            sy = ((sy % g.h) + g.h) % g.h;
          } else if (sy < 0 || sy >= g.h) {
            std::fill_n(row + y * g.w, g.w, 0.0);
            continue;
          }
          for (int xx = 0; xx < g.w; ++xx) {
            int sx = xx + j - pw;
            if (g.padding == Padding::circular) {
              sx = ((sx % g.w) + g.w) % g.w;
              row[y * g.w + xx] = xc[sy * g.w + sx];
            } else {
              row[y * g.w + xx] = (sx < 0 || sx >= g.w) ? 0.0 : xc[sy * g.w + sx];
            }
          }
        }
      }
}

void col2im_add(const ConvGeom& g, const double* cols, double* x) {
  const int ph = g.kh / 2;
  const int pw = g.kw / 2;
  for (int c = 0; c < g.cin; ++c)
    for (int i = 0; i < g.kh; ++i)
      for (int j = 0; j < g.kw; ++j) {
        const double* row = cols + (static_cast<std::size_t>(c) * g.kh * g.kw + i * g.kw + j) * g.pixels();
        double* xc = x + static_cast<std::size_t>(c) * g.pixels();
        for (int y = 0; y < g.h; ++y) {
          int sy = y + i - ph;
          if (g.padding == Padding::circular) {
            sy = ((sy % g.h) + g.h) % g.h;
          } else if (sy < 0 || sy >= g.h) {
            continue;
          }
          for (int xx = 0; xx < g.w; ++xx) {
            int sx = xx + j - pw;
            if (g.padding == Padding::circular) {
              sx = ((sx % g.w) + g.w) % g.w;
            } else if (sx < 0 || sx >= g.w) {
              continue;
            }
            xc[sy * g.w + sx] += row[y * g.w + xx];
          }
        }
      }
}

ConvGeom conv_geometry(const Shape& in, const Shape& k, Padding padding) {
  if (in.size() != 4 || k.size() != 4 || in[1] != k[1]) {
    throw ValidationError("conv2d shape mismatch: input " + shape_str(in) + ", kernel " + shape_str(k));
  }
  if (k[2] % 2 == 0 || k[3] % 2 == 0) {
    throw ValidationError("conv2d needs odd kernel extents, got kernel " + shape_str(k) + " for input " + shape_str(in));
  }
  return ConvGeom{in[0], in[1], in[2], in[3], k[0], k[2], k[3], padding};
}

}  // namespace

Var conv2d(const Var& input, const Var& kernel, Padding padding) {
  const ConvGeom g = conv_geometry(input.shape(), kernel.shape(), padding);
  const bool pointwise = g.kh == 1 && g.kw == 1;
  NdArray out(Shape{g.batch, g.cout, g.h, g.w});
  std::vector<double> cols(pointwise ? 0 : static_cast<std::size_t>(g.patch()) * g.pixels());
  const std::size_t in_stride = static_cast<std::size_t>(g.cin) * g.pixels();
  const std::size_t out_stride = static_cast<std::size_t>(g.cout) * g.pixels();
  for (int b = 0; b < g.batch; ++b) {
    const double* xb = input.value().data().data() + b * in_stride;
    const double* src = xb;
    if (!pointwise) {
      im2col(g, xb, cols.data());
      src = cols.data();
    }
    detail::gemm(g.cout, g.pixels(), g.patch(), kernel.value().data().data(), g.patch(), src, g.pixels(),
                 out.data().data() + b * out_stride, g.pixels(), false);
  }
  return make_result(std::move(out), {input, kernel}, [g, pointwise, in_stride, out_stride](Node& self) {
    Node& px = *self.parents[0];
    Node& pk = *self.parents[1];
    std::vector<double> cols(pointwise ? 0 : static_cast<std::size_t>(g.patch()) * g.pixels());
    std::vector<double> gcols(static_cast<std::size_t>(g.patch()) * g.pixels());
    for (int b = 0; b < g.batch; ++b) {
      const double* gout = self.grad.data().data() + b * out_stride;
      if (pk.requires_grad) {
        const double* src = px.value.data().data() + b * in_stride;
        if (!pointwise) {
          im2col(g, src, cols.data());
          src = cols.data();
        }
        detail::gemm_nt(g.cout, g.patch(), g.pixels(), gout, g.pixels(), src, g.pixels(),
                        pk.grad_buffer().data().data(), g.patch(), true);
      }
      if (px.requires_grad) {
        double* gx = px.grad_buffer().data().data() + b * in_stride;
        if (pointwise) {
          detail::gemm_tn(g.patch(), g.pixels(), g.cout, pk.value.data().data(), g.patch(), gout, g.pixels(), gx,
                          g.pixels(), true);
        } else {
          detail::gemm_tn(g.patch(), g.pixels(), g.cout, pk.value.data().data(), g.patch(), gout, g.pixels(),
                          gcols.data(), g.pixels(), false);
          col2im_add(g, gcols.data(), gx);
        }
      }
    }
  });
}

NdArray conv2d(const NdArray& input, const NdArray& kernel, Padding padding) {
  NoGradGuard guard;
  return conv2d(Var::constant(input), Var::constant(kernel), padding).value();
}

SortResult sort_flat(const Var& a) {
  const NdArray& x = a.value();
  std::vector<std::size_t> perm(x.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  NdArray out(Shape{static_cast<int>(x.size())});
  for (std::size_t k = 0; k < perm.size(); ++k) out[k] = x[perm[k]];
  Var values = make_result(std::move(out), {a}, [perm](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    NdArray& buf = p.grad_buffer();
    for (std::size_t k = 0; k < perm.size(); ++k) buf[perm[k]] += self.grad[k];
  });
  return SortResult{std::move(values), std::move(perm)};
}

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw ValidationError("concat of nothing");
  const int nd = parts[0].value().ndim();
  axis = normalize_axis(axis, nd);
  Shape shape = parts[0].shape();
  shape[axis] = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    s[axis] = shape[axis];
    if (s != shape) {
      throw ValidationError("concat shape mismatch: " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    }
    shape[axis] += p.shape()[axis];
  }
  NdArray out(shape);
  const AxisSplit so = split_at(shape, axis);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const AxisSplit sp = split_at(p.shape(), axis);
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(p.value().data().data() + o * sp.extent * sp.inner, sp.extent * sp.inner,
                  out.data().data() + (o * so.extent + off) * so.inner);
    off += sp.extent;
  }
  return make_result(std::move(out), parts, [offsets, so, axis](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      const AxisSplit sp = split_at(p.value.shape(), axis);
      NdArray& buf = p.grad_buffer();
      for (std::size_t o = 0; o < sp.outer; ++o) {
        const double* g = self.grad.data().data() + (o * so.extent + offsets[k]) * so.inner;
        double* d = buf.data().data() + o * sp.extent * sp.inner;
        for (std::size_t i = 0; i < sp.extent * sp.inner; ++i) d[i] += g[i];
      }
    }
  });
}

Var slice(const Var& a, int axis, int begin, int end) {
  axis = normalize_axis(axis, a.value().ndim());
  if (begin < 0 || end > a.shape()[axis] || begin >= end) {
    throw ValidationError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " +
                          shape_str(a.shape()));
  }
  Shape shape = a.shape();
  shape[axis] = end - begin;
  const AxisSplit si = split_at(a.shape(), axis);
  const AxisSplit so = split_at(shape, axis);
  NdArray out(shape);
  for (std::size_t o = 0; o < si.outer; ++o)
    std::copy_n(a.value().data().data() + (o * si.extent + begin) * si.inner, so.extent * si.inner,
                out.data().data() + o * so.extent * so.inner);
  return make_result(std::move(out), {a}, [si, so, begin](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    NdArray& buf = p.grad_buffer();
    for (std::size_t o = 0; o < si.outer; ++o) {
      const double* g = self.grad.data().data() + o * so.extent * so.inner;
      double* d = buf.data().data() + (o * si.extent + begin) * si.inner;
      for (std::size_t i = 0; i < so.extent * so.inner; ++i) d[i] += g[i];
    }
  });
}

Var mse(const Var& a, const Var& b) { return mean_all(pow2(sub(a, b))); }

}  // namespace slk
