#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "slk/error.hpp"

namespace slk {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array of doubles.
class NdArray {
 public:
  NdArray() = default;
  explicit NdArray(Shape shape, double fill = 0.0);
  NdArray(Shape shape, std::vector<double> data);

  static NdArray scalar(double v) { return NdArray(Shape{1}, v); }
  static NdArray randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0);

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  // Negative axes count from the back.
  int dim(int axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::initializer_list<int> idx);
  double at(std::initializer_list<int> idx) const;

  NdArray reshaped(Shape shape) const;
  void fill(double v);
  double item() const;

  bool all_finite() const;

 private:
  std::size_t offset(std::initializer_list<int> idx) const;

  Shape shape_;
  std::vector<double> data_;
};

double max_abs_diff(const NdArray& a, const NdArray& b);
double sum(const NdArray& a);
double mean(const NdArray& a);

}  // namespace slk
