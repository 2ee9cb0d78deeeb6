#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "fmm/errors.hpp"

namespace fmm {

//
// Row-major view onto a strided block of doubles. A view never owns its
// storage; it aliases the parent DenseMatrix (or another view) and must not
// outlive it.
//
template <typename T>
class BasicMatrixView {
 public:
  using value_type = std::remove_const_t<T>;

  BasicMatrixView() = default;
  BasicMatrixView(T* data, std::size_t rows, std::size_t cols, std::size_t ld)
      : data_(data), rows_(rows), cols_(cols), ld_(ld) {
    assert(ld_ >= cols_ || rows_ <= 1);
  }

  // Mutable views convert to read-only views.
  template <typename U>
    requires(std::is_const_v<T> && std::is_same_v<const U, T>)
  BasicMatrixView(const BasicMatrixView<U>& other)  // NOLINT(google-explicit-constructor)
      : data_(other.data()), rows_(other.rows()), cols_(other.cols()), ld_(other.ld()) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t ld() const noexcept { return ld_; }
  std::size_t size() const noexcept { return rows_ * cols_; }
  bool empty() const noexcept { return rows_ == 0 || cols_ == 0; }
  T* data() const noexcept { return data_; }

  T& operator()(std::size_t r, std::size_t c) const noexcept {
    assert(r < rows_ && c < cols_);
    return data_[r * ld_ + c];
  }

  T& at(std::size_t r, std::size_t c) const {
    if (r >= rows_ || c >= cols_) {
      throw RangeError("matrix index (" + std::to_string(r) + "," + std::to_string(c) +
                       ") outside " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
    return data_[r * ld_ + c];
  }

  T* row(std::size_t r) const noexcept { return data_ + r * ld_; }

  BasicMatrixView block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
    if (r0 + nr > rows_ || c0 + nc > cols_) {
      throw RangeError("block exceeds parent matrix");
    }
    return BasicMatrixView(data_ + r0 * ld_ + c0, nr, nc, ld_);
  }

 private:
  T* data_ = nullptr;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t ld_ = 0;
};

using MatrixView = BasicMatrixView<double>;
using ConstMatrixView = BasicMatrixView<const double>;

// Owning contiguous row-major matrix (leading dimension == cols).
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  // Entries uniform in [-1, 1).
  template <typename Rng>
  static DenseMatrix random(std::size_t rows, std::size_t cols, Rng& rng) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    DenseMatrix m(rows, cols);
    for (auto& x : m.data_) x = dist(rng);
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t ld() const noexcept { return cols_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  double& operator()(std::size_t r, std::size_t c) noexcept {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const noexcept {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double at(std::size_t r, std::size_t c) const { return view().at(r, c); }

  MatrixView view() noexcept { return {data_.data(), rows_, cols_, std::max<std::size_t>(cols_, 1)}; }
  ConstMatrixView view() const noexcept {
    return {data_.data(), rows_, cols_, std::max<std::size_t>(cols_, 1)};
  }
  operator MatrixView() noexcept { return view(); }             // NOLINT(google-explicit-constructor)
  operator ConstMatrixView() const noexcept { return view(); }  // NOLINT(google-explicit-constructor)

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Row-major vectorization: vec(A)[i * cols + j] = A(i, j).
inline std::vector<double> vectorize(ConstMatrixView a) {
  std::vector<double> v;
  v.reserve(a.size());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) v.push_back(a(i, j));
  return v;
}

inline DenseMatrix unvectorize(std::span<const double> v, std::size_t rows, std::size_t cols) {
  if (v.size() != rows * cols) {
    throw ShapeError("vector of length " + std::to_string(v.size()) + " cannot form a " +
                     std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
  }
  DenseMatrix m(rows, cols);
  std::copy(v.begin(), v.end(), m.data());
  return m;
}

inline void fill(MatrixView a, double value) {
  for (std::size_t i = 0; i < a.rows(); ++i) std::fill_n(a.row(i), a.cols(), value);
}

inline void copy(ConstMatrixView src, MatrixView dst) {
  if (src.rows() != dst.rows() || src.cols() != dst.cols()) throw ShapeError("copy: shape mismatch");
  for (std::size_t i = 0; i < src.rows(); ++i) std::copy_n(src.row(i), src.cols(), dst.row(i));
}

inline double frobenius_norm(ConstMatrixView a) {
  long double sum = 0.0L;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) sum += static_cast<long double>(a(i, j)) * a(i, j);
  return static_cast<double>(std::sqrt(sum));
}

// ||a - b||_F / ||b||_F, or the absolute difference norm when b is zero.
inline double relative_error(ConstMatrixView a, ConstMatrixView b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("relative_error: shape mismatch");
  long double diff = 0.0L;
  long double ref = 0.0L;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const long double d = static_cast<long double>(a(i, j)) - b(i, j);
      diff += d * d;
      ref += static_cast<long double>(b(i, j)) * b(i, j);
    }
  }
  return ref > 0 ? static_cast<double>(std::sqrt(diff / ref)) : static_cast<double>(std::sqrt(diff));
}

}  // namespace fmm
