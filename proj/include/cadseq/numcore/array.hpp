#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cadseq/error.hpp"

namespace cadseq::nc {

using Shape = std::vector<std::size_t>;

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<Mat<T>>;
template <typename T>
using CMatMap = Eigen::Map<const Mat<T>>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& s);

// Dense row-major array. Any rank is stored; primitives view it as a matrix of
// rows() x cols() where cols() is the last dimension. Storage is aligned to the
// widest vector width so Eigen reductions take the same path for equal data.
template <typename T>
class Array {
 public:
  using value_type = T;
  using Storage = std::vector<T, Eigen::aligned_allocator<T>>;

  Array() = default;
  explicit Array(Shape shape, T fill = T(0)) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  Array(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) { check(); }
  Array(Shape shape, const std::vector<T>& data) : shape_(std::move(shape)), data_(data.begin(), data.end()) { check(); }

  static Array scalar(T v) { return Array({1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }
  std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  Storage& storage() { return data_; }
  const Storage& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  MatMap<T> mat() { return MatMap<T>(data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())); }
  CMatMap<T> mat() const {
    return CMatMap<T>(data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
  }

  Array reshaped(Shape s) const {
    if (shape_size(s) != size()) {
      throw Error(ErrorCode::ShapeMismatch, "cannot reshape " + shape_string(shape_) + " to " + shape_string(s));
    }
    return Array(std::move(s), data_);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <typename U>
  Array<U> cast() const {
    return Array<U>(shape_, typename Array<U>::Storage(data_.begin(), data_.end()));
  }

  bool operator==(const Array&) const = default;

 private:
  void check() const {
    if (shape_size(shape_) != data_.size()) {
      throw Error(ErrorCode::ShapeMismatch, "data length does not match shape " + shape_string(shape_));
    }
  }

  Shape shape_;
  Storage data_;
};

inline std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out + "]";
}

}  // namespace cadseq::nc
