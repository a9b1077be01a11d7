#include "slk/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "slk/ops.hpp"

namespace slk {

TargetDistribution build_target(std::vector<double> values, std::size_t dim) {
  if (values.empty()) throw ValidationError("cannot build a target distribution from no values");
  if (dim == 0 || dim > values.size()) {
    throw ValidationError("target dim " + std::to_string(dim) + " must be in 1.." + std::to_string(values.size()));
  }
  std::sort(values.begin(), values.end());
  TargetDistribution t;
  t.sorted_values.resize(dim);
  const std::size_t base = values.size() / dim;
  const std::size_t extra = values.size() % dim;
  std::size_t pos = 0;
  for (std::size_t g = 0; g < dim; ++g) {
    const std::size_t len = base + (g < extra ? 1 : 0);
    double acc = 0;
    for (std::size_t k = 0; k < len; ++k) acc += values[pos + k];
    t.sorted_values[g] = acc / static_cast<double>(len);
    pos += len;
  }
  return t;
}

TargetDistribution build_target_distribution(const std::function<NdArray()>& sampler, int n_samples,
                                             std::size_t dim) {
  if (!sampler || n_samples < 1) throw ValidationError("empty sampler");
  std::vector<double> pool;
  for (int i = 0; i < n_samples; ++i) {
    const NdArray a = sampler();
    pool.insert(pool.end(), a.data().begin(), a.data().end());
  }
  TargetDistribution t = build_target(std::move(pool), dim);
  t.n_samples = static_cast<std::size_t>(n_samples);
  return t;
}

double target_quantile(const TargetDistribution& t, double q) {
  const auto& v = t.sorted_values;
  if (v.empty()) throw ValidationError("empty target distribution");
  const double pos = std::clamp(q * static_cast<double>(v.size()) - 0.5, 0.0, static_cast<double>(v.size() - 1));
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

namespace {

void check_c(double c) {
  if (!(c >= 0.0 && c <= 1.0)) throw ValidationError("interpolation coefficient must lie in [0,1]");
}

}  // namespace

NdArray distribution_interpolate(const NdArray& x, const TargetDistribution& t, double c) {
  check_c(c);
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  NdArray out(x.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t idx = order[r];
    const double q = (static_cast<double>(r) + 0.5) / static_cast<double>(n);
    out[idx] = (1.0 - c) * x[idx] + c * target_quantile(t, q);
  }
  return out;
}

NdArray distribution_interpolate(const NdArray& x, const std::vector<double>& reference_sorted,
                                 const TargetDistribution& t, double c) {
  check_c(c);
  if (reference_sorted.empty()) throw ValidationError("empty reference sample");
  if (!std::is_sorted(reference_sorted.begin(), reference_sorted.end())) {
    throw ValidationError("reference sample must be sorted");
  }
  const double n = static_cast<double>(reference_sorted.size());
  NdArray out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto lo = std::lower_bound(reference_sorted.begin(), reference_sorted.end(), x[i]);
    const auto hi = std::upper_bound(lo, reference_sorted.end(), x[i]);
    const double q = static_cast<double>((lo - reference_sorted.begin()) + (hi - reference_sorted.begin())) / (2 * n);
    out[i] = (1.0 - c) * x[i] + c * target_quantile(t, q);
  }
  return out;
}

Var distribution_regularization(const Var& s, const TargetDistribution& t) {
  if (s.value().size() != t.sorted_values.size()) {
    throw ValidationError("distribution regularization: " + std::to_string(s.value().size()) +
                          " values vs target of " + std::to_string(t.sorted_values.size()));
  }
  const int n = static_cast<int>(t.sorted_values.size());
  Var sorted = sort_flat(s).values;
  return mse(sorted, Var::constant(NdArray(Shape{n}, t.sorted_values)));
}

namespace {

std::vector<double> quantile_resample(const std::vector<double>& sorted, std::size_t n) {
  TargetDistribution t;
  t.sorted_values = sorted;
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = target_quantile(t, (static_cast<double>(k) + 0.5) / n);
  return out;
}

}  // namespace

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ValidationError("wasserstein_1d of an empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() < b.size()) a = quantile_resample(a, b.size());
  if (b.size() < a.size()) b = quantile_resample(b, a.size());
  double acc = 0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += std::abs(a[k] - b[k]);
  return acc / static_cast<double>(a.size());
}

double wasserstein_1d(const NdArray& a, const TargetDistribution& t) {
  return wasserstein_1d(a.vec(), t.sorted_values);
}

Histogram histogram(const std::vector<double>& values, int bins, double lo, double hi) {
  if (bins < 1 || !(hi > lo)) throw ValidationError("histogram needs bins >= 1 and hi > lo");
  Histogram h{lo, hi, std::vector<std::size_t>(bins, 0)};
  for (double v : values) {
    int b = static_cast<int>(std::floor((v - lo) / (hi - lo) * bins));
    b = std::clamp(b, 0, bins - 1);
    ++h.counts[b];
  }
  return h;
}

CorrelationReport feature_correlations(const NdArray& samples, int bins) {
  if (samples.ndim() != 2 || samples.dim(0) < 2) {
    throw ValidationError("feature_correlations needs [N,D] with N >= 2, got " + shape_str(samples.shape()));
  }
  const int n = samples.dim(0);
  const int d = samples.dim(1);
  std::vector<std::vector<double>> centered(d, std::vector<double>(n));
  std::vector<double> norm(d, 0.0);
  CorrelationReport rep;
  std::vector<int> live;
  for (int j = 0; j < d; ++j) {
    double m = 0;
    for (int i = 0; i < n; ++i) m += samples[static_cast<std::size_t>(i) * d + j];
    m /= n;
    for (int i = 0; i < n; ++i) {
      const double v = samples[static_cast<std::size_t>(i) * d + j] - m;
      centered[j][i] = v;
      norm[j] += v * v;
    }
    norm[j] = std::sqrt(norm[j]);
    if (norm[j] <= 1e-12 * std::sqrt(static_cast<double>(n))) {
      rep.degenerate.push_back(j);
    } else {
      live.push_back(j);
    }
  }
  for (std::size_t a = 0; a < live.size(); ++a)
    for (std::size_t b = a + 1; b < live.size(); ++b) {
      const int p = live[a];
      const int q = live[b];
      double dot = 0;
      for (int i = 0; i < n; ++i) dot += centered[p][i] * centered[q][i];
      rep.coefficients.push_back(std::clamp(dot / (norm[p] * norm[q]), -1.0, 1.0));
    }
  rep.hist = histogram(rep.coefficients, bins, -1.0, 1.0);
  return rep;
}

}  // namespace slk
