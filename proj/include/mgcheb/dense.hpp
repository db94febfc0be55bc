#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace mgcheb {

/// Row-major dense matrix of doubles.
class DenseMat {
 public:
  DenseMat() = default;
  DenseMat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMat(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw DimensionError("DenseMat: data length does not match shape");
  }
  DenseMat(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("DenseMat: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static DenseMat identity(std::size_t n) {
    DenseMat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  double& operator[](std::size_t k) { return data_[k]; }
  double operator[](std::size_t k) const { return data_[k]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool same_shape(const DenseMat& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  DenseMat& operator+=(const DenseMat& o) {
    require_same_shape(o, "+=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  DenseMat& operator-=(const DenseMat& o) {
    require_same_shape(o, "-=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  DenseMat& operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  friend DenseMat operator+(DenseMat a, const DenseMat& b) { return a += b; }
  friend DenseMat operator-(DenseMat a, const DenseMat& b) { return a -= b; }
  friend DenseMat operator*(DenseMat a, double s) { return a *= s; }
  friend DenseMat operator*(double s, DenseMat a) { return a *= s; }

  DenseMat transpose() const {
    DenseMat t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  void require_same_shape(const DenseMat& o, const char* what) const {
    if (!same_shape(o))
      throw DimensionError(std::string(what) + ": shape " + shape_str() + " vs " + o.shape_str());
  }

  std::string shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// out += a * b
inline void gemm_acc(const DenseMat& a, const DenseMat& b, DenseMat& out) {
  const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* od = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = od + i * p;
    for (std::size_t k = 0; k < m; ++k) {
      const double aik = ad[i * m + k];
      if (aik == 0.0) continue;
      const double* brow = bd + k * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
    }
  }
}

/// out += aᵀ * b
inline void gemm_tn_acc(const DenseMat& a, const DenseMat& b, DenseMat& out) {
  const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* od = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* brow = bd + i * p;
    for (std::size_t k = 0; k < m; ++k) {
      const double aik = ad[i * m + k];
      if (aik == 0.0) continue;
      double* orow = od + k * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
    }
  }
}

/// out += a * bᵀ
inline void gemm_nt_acc(const DenseMat& a, const DenseMat& b, DenseMat& out) {
  const std::size_t n = a.rows(), m = a.cols(), p = b.rows();
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* od = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = ad + i * m;
    for (std::size_t j = 0; j < p; ++j) {
      const double* brow = bd + j * m;
      double s = 0.0;
      for (std::size_t k = 0; k < m; ++k) s += arow[k] * brow[k];
      od[i * p + j] += s;
    }
  }
}

inline DenseMat matmul(const DenseMat& a, const DenseMat& b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul: " + a.shape_str() + " * " + b.shape_str());
  DenseMat out(a.rows(), b.cols());
  gemm_acc(a, b, out);
  return out;
}

inline double max_abs_diff(const DenseMat& a, const DenseMat& b) {
  a.require_same_shape(b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

inline double max_abs(const DenseMat& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace mgcheb
