#pragma once

#include <cassert>
#include <cmath>
#include <vector>

#include "rhm/kernels.hpp"

namespace rhm {

/// Dense row-major matrix of doubles. Column vectors are n-by-1 matrices.
/// Arithmetic routes through the kernel table (see kernels.hpp).
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, 0.0) {
    assert(rows >= 0 && cols >= 0);
  }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(int i) { return data_.data() + static_cast<std::size_t>(i) * cols_; }
  const double* row(int i) const { return data_.data() + static_cast<std::size_t>(i) * cols_; }

  double& operator()(int i, int j) {
    assert(i >= 0 && i < rows_ && j >= 0 && j < cols_);
    return data_[static_cast<std::size_t>(i) * cols_ + j];
  }
  double operator()(int i, int j) const {
    assert(i >= 0 && i < rows_ && j >= 0 && j < cols_);
    return data_[static_cast<std::size_t>(i) * cols_ + j];
  }

  Matrix& operator+=(const Matrix& o) {
    assert(same_shape(o));
    kern::active().add(data(), o.data(), data(), size());
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    assert(same_shape(o));
    kern::active().sub(data(), o.data(), data(), size());
    return *this;
  }
  Matrix& operator*=(double s) {
    kern::active().scal(s, data(), size());
    return *this;
  }
  /// this += alpha * o
  Matrix& axpy(double alpha, const Matrix& o) {
    assert(same_shape(o));
    kern::active().axpy(alpha, o.data(), data(), size());
    return *this;
  }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

inline Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
inline Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
inline Matrix operator*(Matrix a, double s) { return a *= s; }
inline Matrix operator*(double s, Matrix a) { return a *= s; }

inline Matrix operator*(const Matrix& a, const Matrix& b) {
  assert(a.cols() == b.rows());
  Matrix c(a.rows(), b.cols());
  kern::active().gemm_nn(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  return c;
}

/// A^T * B
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  assert(a.rows() == b.rows());
  Matrix c(a.cols(), b.cols());
  kern::active().gemm_tn(a.data(), b.data(), c.data(), a.cols(), a.rows(), b.cols());
  return c;
}

/// A * B^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  assert(a.cols() == b.cols());
  Matrix c(a.rows(), b.rows());
  kern::active().gemm_nt(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.rows());
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

/// 0.5 * (A + A^T)
inline Matrix symmetrize(const Matrix& a) {
  assert(a.rows() == a.cols());
  Matrix s(a.rows(), a.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) s(i, j) = 0.5 * (a(i, j) + a(j, i));
  return s;
}

/// Frobenius inner product.
inline double fdot(const Matrix& a, const Matrix& b) {
  assert(a.same_shape(b));
  return kern::active().dot(a.data(), b.data(), a.size());
}

inline double fnorm_sq(const Matrix& a) { return kern::active().sumsq(a.data(), a.size()); }
inline double fnorm(const Matrix& a) { return std::sqrt(fnorm_sq(a)); }

inline double trace(const Matrix& a) {
  assert(a.rows() == a.cols());
  double t = 0.0;
  for (int i = 0; i < a.rows(); ++i) t += a(i, i);
  return t;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  assert(a.same_shape(b));
  Matrix c(a.rows(), a.cols());
  kern::active().mul(a.data(), b.data(), c.data(), a.size());
  return c;
}

inline Matrix hadamard_div(const Matrix& a, const Matrix& b) {
  assert(a.same_shape(b));
  Matrix c(a.rows(), a.cols());
  kern::active().div(a.data(), b.data(), c.data(), a.size());
  return c;
}

inline bool all_finite(const Matrix& a) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(a.data()[i])) return false;
  return true;
}

inline double max_abs(const Matrix& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.data()[i]));
  return m;
}

}  // namespace rhm
