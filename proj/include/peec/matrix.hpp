#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "peec/errors.hpp"
#include "peec/random.hpp"

namespace peec {

/// Dense row-major matrix of doubles. Operations return new values and are
/// expected to leave every entry finite; producers that could emit NaN/Inf
/// check their result and throw NumericError instead.
class Matrix {
public:
  Matrix() = default;

  Matrix(size_t rows, size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  Matrix(size_t rows, size_t cols, std::vector<double> entries)
      : rows_(rows), cols_(cols), data_(std::move(entries)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("Matrix: entry count " + std::to_string(data_.size()) +
                       " does not match " + shape_str());
    }
  }

  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(size_t n) {
    Matrix m(n, n);
    for (size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix filled(size_t rows, size_t cols, double value) {
    Matrix m(rows, cols);
    std::fill(m.data_.begin(), m.data_.end(), value);
    return m;
  }

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(size_t i, size_t j) { return data_[i * cols_ + j]; }
  double operator()(size_t i, size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& entries() const { return data_; }

  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  bool same_shape(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

private:
  size_t rows_ = 0;
  size_t cols_ = 0;
  std::vector<double> data_;
};

namespace detail {

using EigenRowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EigenMap = Eigen::Map<EigenRowMajor>;
using EigenConstMap = Eigen::Map<const EigenRowMajor>;

inline EigenConstMap as_eigen(const Matrix& m) {
  return EigenConstMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                       static_cast<Eigen::Index>(m.cols()));
}

inline EigenMap as_eigen(Matrix& m) {
  return EigenMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}

inline void require_same_shape(const Matrix& a, const Matrix& b,
                               const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
  }
}

} // namespace detail

inline void ensure_finite(const Matrix& m, const char* context) {
  for (double v : m.entries()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(context) + ": non-finite value produced");
    }
  }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  }
  Matrix c(a.rows(), b.cols());
  detail::as_eigen(c).noalias() = detail::as_eigen(a) * detail::as_eigen(b);
  ensure_finite(c, "matmul");
  return c;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  detail::require_same_shape(a, b, "add");
  Matrix c(a.rows(), a.cols());
  for (size_t i = 0; i < c.size(); ++i) c.data()[i] = a.data()[i] + b.data()[i];
  ensure_finite(c, "add");
  return c;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
  detail::require_same_shape(a, b, "sub");
  Matrix c(a.rows(), a.cols());
  for (size_t i = 0; i < c.size(); ++i) c.data()[i] = a.data()[i] - b.data()[i];
  ensure_finite(c, "sub");
  return c;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  detail::require_same_shape(a, b, "hadamard");
  Matrix c(a.rows(), a.cols());
  for (size_t i = 0; i < c.size(); ++i) c.data()[i] = a.data()[i] * b.data()[i];
  ensure_finite(c, "hadamard");
  return c;
}

inline Matrix scale(const Matrix& a, double s) {
  Matrix c(a.rows(), a.cols());
  for (size_t i = 0; i < c.size(); ++i) c.data()[i] = a.data()[i] * s;
  ensure_finite(c, "scale");
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix c(a.cols(), a.rows());
  for (size_t i = 0; i < a.rows(); ++i)
    for (size_t j = 0; j < a.cols(); ++j) c(j, i) = a(i, j);
  return c;
}

inline Matrix row_select(const Matrix& a, std::span<const size_t> indices) {
  Matrix c(indices.size(), a.cols());
  for (size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= a.rows()) {
      throw ShapeError("row_select: index " + std::to_string(indices[k]) +
                       " out of range for " + a.shape_str());
    }
    std::copy_n(a.row(indices[k]).data(), a.cols(), c.row(k).data());
  }
  return c;
}

enum class Reduce { Sum, Mean, Min, Max };

/// Reduce each column to a scalar; result is 1 x cols.
inline Matrix col_reduce(const Matrix& a, Reduce op) {
  if (a.rows() == 0) throw ShapeError("col_reduce: empty matrix");
  Matrix out(1, a.cols());
  for (size_t j = 0; j < a.cols(); ++j) {
    double acc = a(0, j);
    for (size_t i = 1; i < a.rows(); ++i) {
      const double v = a(i, j);
      switch (op) {
      case Reduce::Sum:
      case Reduce::Mean: acc += v; break;
      case Reduce::Min: acc = std::min(acc, v); break;
      case Reduce::Max: acc = std::max(acc, v); break;
      }
    }
    if (op == Reduce::Mean) acc /= static_cast<double>(a.rows());
    out(0, j) = acc;
  }
  ensure_finite(out, "col_reduce");
  return out;
}

/// Index of the largest entry per row; ties break toward the lowest index.
inline std::vector<size_t> argmax_rows(const Matrix& a) {
  if (a.cols() == 0) throw ShapeError("argmax_rows: zero columns");
  std::vector<size_t> out(a.rows());
  for (size_t i = 0; i < a.rows(); ++i) {
    size_t best = 0;
    for (size_t j = 1; j < a.cols(); ++j) {
      if (a(i, j) > a(i, best)) best = j;
    }
    out[i] = best;
  }
  return out;
}

inline Matrix rand_uniform(RandomSource& rs, size_t rows, size_t cols,
                           double lo, double hi) {
  if (!(lo < hi)) throw ValueError("rand_uniform: lo must be < hi");
  Matrix m(rows, cols);
  for (size_t i = 0; i < m.size(); ++i)
    m.data()[i] = lo + (hi - lo) * rs.next_double();
  return m;
}

inline Matrix rand_normal(RandomSource& rs, size_t rows, size_t cols,
                          double mean, double std) {
  if (!(std > 0.0)) throw ValueError("rand_normal: std must be > 0");
  Matrix m(rows, cols);
  for (size_t i = 0; i < m.size(); ++i)
    m.data()[i] = mean + std * rs.next_standard_normal();
  return m;
}

} // namespace peec
