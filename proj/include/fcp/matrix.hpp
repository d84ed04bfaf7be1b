#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "fcp/errors.hpp"

namespace fcp {

/// Dense row-major matrix of doubles. Small sizes only (policy graphs and
/// semantic maps live in the tens-to-hundreds range), so everything is the
/// straightforward O(n^3) arithmetic.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), a_(static_cast<std::size_t>(rows) * cols, fill) {}

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }

  double& operator()(int i, int j) { return a_[static_cast<std::size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * cols_ + j]; }

  std::span<const double> row(int i) const {
    return {a_.data() + static_cast<std::size_t>(i) * cols_, static_cast<std::size_t>(cols_)};
  }

  const std::vector<double>& data() const { return a_; }

  Matrix& operator+=(const Matrix& o) {
    check_same_shape(o);
    for (std::size_t k = 0; k < a_.size(); ++k) a_[k] += o.a_[k];
    return *this;
  }

  Matrix operator+(const Matrix& o) const {
    Matrix r = *this;
    r += o;
    return r;
  }

  Matrix& operator*=(double s) {
    for (auto& x : a_) x *= s;
    return *this;
  }

  Matrix operator*(double s) const {
    Matrix r = *this;
    r *= s;
    return r;
  }

  Matrix operator*(const Matrix& o) const {
    if (cols_ != o.rows_) throw DimensionError("matrix product: inner dimensions differ");
    Matrix r(rows_, o.cols_);
    for (int i = 0; i < rows_; ++i) {
      for (int k = 0; k < cols_; ++k) {
        double aik = (*this)(i, k);
        if (aik == 0.0) continue;
        for (int j = 0; j < o.cols_; ++j) r(i, j) += aik * o(k, j);
      }
    }
    return r;
  }

  std::vector<double> operator*(std::span<const double> v) const {
    if (static_cast<int>(v.size()) != cols_)
      throw DimensionError("matrix-vector product: dimension mismatch");
    std::vector<double> r(rows_, 0.0);
    for (int i = 0; i < rows_; ++i) {
      double s = 0.0;
      for (int j = 0; j < cols_; ++j) s += (*this)(i, j) * v[j];
      r[i] = s;
    }
    return r;
  }

  double inf_norm() const {
    double best = 0.0;
    for (int i = 0; i < rows_; ++i) {
      double s = 0.0;
      for (int j = 0; j < cols_; ++j) s += std::abs((*this)(i, j));
      best = std::max(best, s);
    }
    return best;
  }

  double max_abs_diff(const Matrix& o) const {
    check_same_shape(o);
    double best = 0.0;
    for (std::size_t k = 0; k < a_.size(); ++k) best = std::max(best, std::abs(a_[k] - o.a_[k]));
    return best;
  }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && a_ == o.a_;
  }

 private:
  void check_same_shape(const Matrix& o) const {
    if (rows_ != o.rows_ || cols_ != o.cols_)
      throw DimensionError("matrix op: shape mismatch");
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> a_;
};

/// exp(A) by scaling-and-squaring around a truncated Taylor core.
///
/// The scaled norm is pushed below 1/2, where a 24-term series already sits at
/// the 1e-25 level, then the result is squared back up. Inputs here are
/// nonnegative adjacency matrices, so the series has no cancellation and the
/// squaring is forward stable; exp(0) returns the identity exactly.
inline Matrix expm(const Matrix& a) {
  if (!a.square()) throw DimensionError("expm: matrix must be square");
  const int n = a.rows();
  double norm = a.inf_norm();
  int squarings = 0;
  if (norm > 0.5) {
    squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
    squarings = std::max(squarings, 0);
  }
  Matrix scaled = a * std::ldexp(1.0, -squarings);

  Matrix result = Matrix::identity(n);
  Matrix term = Matrix::identity(n);
  for (int k = 1; k <= 24; ++k) {
    term = term * scaled;
    term *= 1.0 / k;
    result += term;
    if (term.inf_norm() < 1e-300) break;
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

}  // namespace fcp
