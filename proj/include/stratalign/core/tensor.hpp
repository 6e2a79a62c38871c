// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stratalign/core/error.hpp"

namespace stratalign {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
  out << ']';
  return out.str();
}

/// Dense row-major array. float for training, double for gradient checking.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size())
      throw ShapeError("data length " + std::to_string(data_.size()) + " does not match " + shape_str(shape_));
  }

  /// 2-D literal, mainly for fixtures: Tensor<double>::matrix({{1, 2}, {3, 4}}).
  static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<T> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
  }

  static Tensor vector(std::initializer_list<T> values) {
    return Tensor({values.size()}, std::vector<T>(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  /// Rows of the tensor viewed as [dim(0), size/dim(0)].
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t row_width() const { return rows() ? data_.size() / rows() : 0; }
  std::span<T> row(std::size_t i) { return std::span<T>(data_).subspan(i * row_width(), row_width()); }
  std::span<const T> row(std::size_t i) const {
    return std::span<const T>(data_).subspan(i * row_width(), row_width());
  }

  /// Same data, new shape.
  Tensor reshaped(Shape shape) const& { return Tensor(std::move(shape), data_); }
  Tensor reshaped(Shape shape) && { return Tensor(std::move(shape), std::move(data_)); }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  template <class U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <class T>
void ensure_finite(const Tensor<T>& t, const char* op) {
  if (!t.all_finite()) throw NumericError(std::string(op) + ": non-finite value in output");
}

template <class T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op) {
  if (t.rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(t.shape()));
}

/// Rows selected by index, in the order given.
template <class T>
Tensor<T> gather_rows(const Tensor<T>& src, std::span<const std::size_t> indices) {
  Shape shape = src.shape();
  shape[0] = indices.size();
  Tensor<T> out(shape);
  const std::size_t w = src.row_width();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= src.rows()) throw ShapeError("gather_rows: index out of range");
    std::copy_n(src.data().begin() + indices[i] * w, w, out.data().begin() + i * w);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix products. Eigen's GEMM is single-threaded here and deterministic for a
// fixed shape, which is all the reproducibility contract asks for.

namespace detail {
template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <class T>
using MutMap = Eigen::Map<RowMat<T>>;

template <class T>
ConstMap<T> as_matrix(const Tensor<T>& t) {
  return ConstMap<T>(t.data().data(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
}
template <class T>
MutMap<T> as_matrix(Tensor<T>& t) {
  return MutMap<T>(t.data().data(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
}
}  // namespace detail

/// c = a · b
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor<T> c({a.dim(0), b.dim(1)});
  if (a.dim(1) == 0) return c;
  detail::as_matrix(c).noalias() = detail::as_matrix(a) * detail::as_matrix(b);
  return c;
}

/// c = aᵀ · b
template <class T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul_tn");
  require_rank(b, 2, "matmul_tn");
  if (a.dim(0) != b.dim(0)) throw ShapeError("matmul_tn: " + shape_str(a.shape()) + "ᵀ x " + shape_str(b.shape()));
  Tensor<T> c({a.dim(1), b.dim(1)});
  if (a.dim(0) == 0) return c;
  detail::as_matrix(c).noalias() = detail::as_matrix(a).transpose() * detail::as_matrix(b);
  return c;
}

/// c = a · bᵀ
template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  if (a.dim(1) != b.dim(1)) throw ShapeError("matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "ᵀ");
  Tensor<T> c({a.dim(0), b.dim(0)});
  if (a.dim(1) == 0) return c;
  detail::as_matrix(c).noalias() = detail::as_matrix(a) * detail::as_matrix(b).transpose();
  return c;
}

/// x[i, :] += bias
template <class T>
void add_row_bias(Tensor<T>& x, const Tensor<T>& bias) {
  const std::size_t w = x.row_width();
  if (bias.size() != w) throw ShapeError("add_row_bias: bias length mismatch");
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    for (std::size_t j = 0; j < w; ++j) r[j] += bias[j];
  }
}

/// Column sums of a [rows x width] view, accumulated in row order.
template <class T>
Tensor<T> sum_rows(const Tensor<T>& x) {
  const std::size_t w = x.row_width();
  Tensor<T> out({w});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    for (std::size_t j = 0; j < w; ++j) out[j] += r[j];
  }
  return out;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

template <class T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("add_inplace: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  Tensor<T> out = a;
  for (auto& v : out.data()) v *= factor;
  return out;
}

/// Fixed-order dot product. Sixteen interleaved partial sums combined in a
/// fixed tree, so dot(a, b) and dot(b, a) are bitwise identical and the loop
/// still vectorizes.
template <class T>
T dot(std::span<const T> a, std::span<const T> b) {
  constexpr std::size_t kLanes = 16;
  T acc[kLanes] = {};
  const std::size_t n = a.size();
  const std::size_t body = n - n % kLanes;
  for (std::size_t i = 0; i < body; i += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += a[i + l] * b[i + l];
  for (std::size_t i = body; i < n; ++i) acc[i - body] += a[i] * b[i];
  for (std::size_t width = kLanes / 2; width > 0; width /= 2)
    for (std::size_t l = 0; l < width; ++l) acc[l] += acc[l + width];
  return acc[0];
}

}  // namespace stratalign
