#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gazesyn/error.hpp"
#include "gazesyn/random.hpp"

namespace gazesyn::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ')';
  return out.str();
}

/// Dense row-major array of doubles with an explicit shape. Batched layer
/// inputs are (N, features) or (N, channels, length).
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    require(data_.size() == shape_size(shape_), "shape_mismatch",
            "tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                shape_string(shape_));
  }

  static Tensor random_normal(Shape shape, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = rng.normal(0.0, stddev);
    return t;
  }

  static Tensor random_uniform(Shape shape, Rng& rng, double limit) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = rng.uniform(-limit, limit);
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  Tensor reshaped(Shape shape) const {
    require(shape_size(shape) == data_.size(), "shape_mismatch",
            "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
  }

  void fill(double value) { std::fill(data_.begin(), data_.end(), value); }

  Tensor& operator+=(const Tensor& other) {
    require(other.shape_ == shape_, "shape_mismatch",
            "cannot add " + shape_string(other.shape_) + " to " + shape_string(shape_));
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  Tensor& operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Stack equally shaped tensors along a new leading batch axis.
inline Tensor stack(std::span<const Tensor> items) {
  require(!items.empty(), "shape_mismatch", "cannot stack an empty list");
  Shape shape{items.size()};
  shape.insert(shape.end(), items[0].shape().begin(), items[0].shape().end());
  std::vector<double> data;
  data.reserve(shape_size(shape));
  for (const auto& t : items) {
    require(t.shape() == items[0].shape(), "shape_mismatch", "stack: inconsistent item shapes");
    data.insert(data.end(), t.storage().begin(), t.storage().end());
  }
  return Tensor(std::move(shape), std::move(data));
}

/// Slice item `n` out of a batched tensor.
inline Tensor unstack(const Tensor& batch, std::size_t n) {
  Shape shape(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t stride = shape_size(shape);
  auto first = batch.storage().begin() + static_cast<std::ptrdiff_t>(n * stride);
  return Tensor(std::move(shape), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(stride)));
}

/// Concatenate two (N, F) tensors along the feature axis.
inline Tensor concat_features(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(0) == b.dim(0), "shape_mismatch",
          "concat_features expects (N,A) and (N,B), got " + shape_string(a.shape()) + " and " +
              shape_string(b.shape()));
  const std::size_t n = a.dim(0), fa = a.dim(1), fb = b.dim(1);
  Tensor out({n, fa + fb});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data() + i * fa, fa, out.data() + i * (fa + fb));
    std::copy_n(b.data() + i * fb, fb, out.data() + i * (fa + fb) + fa);
  }
  return out;
}

/// Concatenate two (N, C, L) tensors along the channel axis.
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2),
          "shape_mismatch",
          "concat_channels expects (N,A,L) and (N,B,L), got " + shape_string(a.shape()) + " and " +
              shape_string(b.shape()));
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), len = a.dim(2);
  Tensor out({n, ca + cb, len});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data() + i * ca * len, ca * len, out.data() + i * (ca + cb) * len);
    std::copy_n(b.data() + i * cb * len, cb * len, out.data() + (i * (ca + cb) + ca) * len);
  }
  return out;
}

}  // namespace gazesyn::nn
