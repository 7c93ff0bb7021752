#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "truncnet/core/errors.hpp"

namespace truncnet {

using Shape = std::vector<std::int64_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t acc, std::int64_t d) { return acc * static_cast<std::size_t>(d); });
}

inline std::string to_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

/// Dense row-major tensor. Image tensors are NCHW; feature vectors are (N, C).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
    for (auto d : shape_) {
      if (d < 0) throw ShapeError("negative tensor dimension in " + to_string(shape_));
    }
  }
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                       to_string(shape_));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::int64_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) noexcept {
    return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  const T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const noexcept {
    return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  T& at(std::int64_t row, std::int64_t col) noexcept {
    return data_[static_cast<std::size_t>(row * shape_[1] + col)];
  }
  const T& at(std::int64_t row, std::int64_t col) const noexcept {
    return data_[static_cast<std::size_t>(row * shape_[1] + col)];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
      throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  Tensor& operator+=(const Tensor& other) {
    require_same_shape(other);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  void require_same_shape(const Tensor& other) const {
    if (!same_shape(other)) {
      throw ShapeError("shape mismatch " + to_string(shape_) + " vs " + to_string(other.shape_));
    }
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  a.require_same_shape(b);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return worst;
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace truncnet
