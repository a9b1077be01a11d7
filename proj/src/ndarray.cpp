#include "slk/ndarray.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace slk {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int e : shape) n *= static_cast<std::size_t>(e);
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

NdArray::NdArray(Shape shape, double fill) : shape_(std::move(shape)) {
  for (int e : shape_) {
    if (e <= 0) throw ValidationError("non-positive extent in shape " + shape_str(shape_));
  }
  data_.assign(numel(shape_), fill);
}

NdArray::NdArray(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (int e : shape_) {
    if (e <= 0) throw ValidationError("non-positive extent in shape " + shape_str(shape_));
  }
  if (numel(shape_) != data_.size()) {
    throw ValidationError("shape " + shape_str(shape_) + " does not match " + std::to_string(data_.size()) +
                          " elements");
  }
}

NdArray NdArray::randn(Shape shape, std::mt19937_64& rng, double stddev) {
  NdArray out(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : out.data_) v = dist(rng);
  return out;
}

int NdArray::dim(int axis) const {
  const int n = ndim();
  if (axis < 0) axis += n;
  if (axis < 0 || axis >= n) {
    throw ValidationError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
  }
  return shape_[axis];
}

std::size_t NdArray::offset(std::initializer_list<int> idx) const {
  if (idx.size() != shape_.size()) {
    throw ValidationError("index rank " + std::to_string(idx.size()) + " != array rank " +
                          std::to_string(shape_.size()));
  }
  std::size_t off = 0;
  std::size_t k = 0;
  for (int i : idx) {
    if (i < 0 || i >= shape_[k]) throw ValidationError("index out of range for shape " + shape_str(shape_));
    off = off * static_cast<std::size_t>(shape_[k]) + static_cast<std::size_t>(i);
    ++k;
  }
  return off;
}

double& NdArray::at(std::initializer_list<int> idx) { return data_[offset(idx)]; }
double NdArray::at(std::initializer_list<int> idx) const { return data_[offset(idx)]; }

NdArray NdArray::reshaped(Shape shape) const {
  if (numel(shape) != data_.size()) {
    throw ValidationError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return NdArray(std::move(shape), data_);
}

void NdArray::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double NdArray::item() const {
  if (data_.size() != 1) throw ValidationError("item() on array of shape " + shape_str(shape_));
  return data_[0];
}

bool NdArray::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const NdArray& a, const NdArray& b) {
  if (a.shape() != b.shape()) {
    throw ValidationError("max_abs_diff shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double sum(const NdArray& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

double mean(const NdArray& a) { return a.empty() ? 0.0 : sum(a) / static_cast<double>(a.size()); }

}  // namespace slk
