#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "slk/autograd.hpp"

namespace slk {

struct TargetDistribution {
  std::vector<double> sorted_values;
  std::size_t n_samples = 0;
  std::string component;

  std::size_t source_dim() const { return sorted_values.size(); }
};

// Sort all values, split into `dim` consecutive groups (remainder spread over the
// leading groups) and average each group.
TargetDistribution build_target(std::vector<double> values, std::size_t dim);
// Draws n_samples arrays from `sampler` and pools their elements.
TargetDistribution build_target_distribution(const std::function<NdArray()>& sampler, int n_samples,
                                             std::size_t dim);

// T^-1(q): linear interpolation at position q*M - 0.5 of the sorted target, clamped.
double target_quantile(const TargetDistribution& t, double q);

// (1-c) x + c T^-1(S(x)), S from x's own midpoint ranks (r - 0.5)/N, ties by stable order.
NdArray distribution_interpolate(const NdArray& x, const TargetDistribution& t, double c);
// Same with S taken from a sorted reference sample: (#below + #below-or-equal) / 2N.
NdArray distribution_interpolate(const NdArray& x, const std::vector<double>& reference_sorted,
                                 const TargetDistribution& t, double c);

// mean((sort(S) - T)^2), differentiable through the forward-pass permutation.
Var distribution_regularization(const Var& s, const TargetDistribution& t);

// Mean absolute difference of sorted samples; unequal counts are matched by quantile.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);
double wasserstein_1d(const NdArray& a, const TargetDistribution& t);

struct Histogram {
  double lo = 0;
  double hi = 0;
  std::vector<std::size_t> counts;
};

Histogram histogram(const std::vector<double>& values, int bins, double lo, double hi);

struct CorrelationReport {
  std::vector<double> coefficients;  // pairs (i<j) among non-degenerate columns
  std::vector<int> degenerate;       // zero-variance columns
  Histogram hist;
};

// Pairwise Pearson coefficients of the columns of samples [N,D].
CorrelationReport feature_correlations(const NdArray& samples, int bins = 20);

}  // namespace slk
