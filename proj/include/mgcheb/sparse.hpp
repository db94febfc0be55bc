#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "dense.hpp"
#include "error.hpp"

namespace mgcheb {

struct Edge {
  std::size_t u;
  std::size_t v;
  double w = 1.0;
};

/// Symmetric sparse matrix in CSR form. Used for adjacencies and rescaled Laplacians.
///
/// Invariants (checked by validate()): row_ptr starts at 0 and ends at nnz, column
/// indices strictly increase within each row and are < n, every stored (i, j) has a
/// mirror (j, i) with the same value, and no stored value is exactly zero.
class SparseSym {
 public:
  SparseSym() = default;
  explicit SparseSym(std::size_t n) : n_(n), row_ptr_(n + 1, 0) {}

  /// Takes ownership of raw CSR arrays and validates them.
  SparseSym(std::size_t n, std::vector<std::size_t> row_ptr, std::vector<std::size_t> col_idx,
            std::vector<double> values)
      : n_(n), row_ptr_(std::move(row_ptr)), col_idx_(std::move(col_idx)), values_(std::move(values)) {
    validate();
  }

  /// Builds an undirected matrix from an edge list. Each edge contributes to both (u, v)
  /// and (v, u); duplicate and reciprocal edges are summed. Self-loops are rejected.
  static SparseSym from_edges(std::size_t n, const std::vector<Edge>& edges) {
    std::vector<std::tuple<std::size_t, std::size_t, double>> trip;
    trip.reserve(edges.size() * 2);
    for (const auto& e : edges) {
      if (e.u >= n || e.v >= n)
        throw InvalidAdjacency("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                               ") out of range for n=" + std::to_string(n));
      if (e.u == e.v) throw InvalidAdjacency("self-loop at node " + std::to_string(e.u));
      trip.emplace_back(e.u, e.v, e.w);
      trip.emplace_back(e.v, e.u, e.w);
    }
    return from_triplets(n, std::move(trip));
  }

  /// Builds from directed (i, j, value) triplets, summing duplicates. The caller must supply a
  /// symmetric set; validate() enforces it.
  static SparseSym from_triplets(std::size_t n, std::vector<std::tuple<std::size_t, std::size_t, double>> trip) {
    std::sort(trip.begin(), trip.end(), [](const auto& a, const auto& b) {
      return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
    });
    SparseSym s(n);
    for (std::size_t k = 0; k < trip.size();) {
      const auto [i, j, w0] = trip[k];
      double w = w0;
      std::size_t m = k + 1;
      while (m < trip.size() && std::get<0>(trip[m]) == i && std::get<1>(trip[m]) == j) w += std::get<2>(trip[m++]);
      k = m;
      if (i >= n || j >= n) throw InvalidAdjacency("triplet index out of range");
      if (w == 0.0) continue;
      s.col_idx_.push_back(j);
      s.values_.push_back(w);
      s.row_ptr_[i + 1]++;
    }
    for (std::size_t i = 0; i < n; ++i) s.row_ptr_[i + 1] += s.row_ptr_[i];
    s.validate();
    return s;
  }

  std::size_t n() const noexcept { return n_; }
  std::size_t nnz() const noexcept { return values_.size(); }
  const std::vector<std::size_t>& row_ptr() const noexcept { return row_ptr_; }
  const std::vector<std::size_t>& col_idx() const noexcept { return col_idx_; }
  const std::vector<double>& values() const noexcept { return values_; }

  /// Value at (i, j), zero if not stored.
  double at(std::size_t i, std::size_t j) const {
    auto b = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
    auto e = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
    auto it = std::lower_bound(b, e, j);
    return (it != e && *it == j) ? values_[static_cast<std::size_t>(it - col_idx_.begin())] : 0.0;
  }

  bool has_diagonal() const {
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p)
        if (col_idx_[p] == i) return true;
    return false;
  }

  DenseMat to_dense() const {
    DenseMat d(n_, n_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) d(i, col_idx_[p]) = values_[p];
    return d;
  }

  void validate() const {
    if (row_ptr_.size() != n_ + 1 || row_ptr_.front() != 0 || row_ptr_.back() != values_.size() ||
        col_idx_.size() != values_.size())
      throw InvalidAdjacency("CSR arrays inconsistent with n and nnz");
    for (std::size_t i = 0; i < n_; ++i) {
      if (row_ptr_[i] > row_ptr_[i + 1]) throw InvalidAdjacency("row_ptr decreasing at row " + std::to_string(i));
      for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
        if (col_idx_[p] >= n_) throw InvalidAdjacency("column index out of range in row " + std::to_string(i));
        if (p > row_ptr_[i] && col_idx_[p] <= col_idx_[p - 1])
          throw InvalidAdjacency("columns not strictly increasing in row " + std::to_string(i));
        if (values_[p] == 0.0 || !std::isfinite(values_[p]))
          throw InvalidAdjacency("explicit zero or non-finite entry in row " + std::to_string(i));
      }
    }
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
        const double mirror = at(col_idx_[p], i);
        if (std::abs(mirror - values_[p]) > 1e-12)
          throw NotSymmetric("entry (" + std::to_string(i) + "," + std::to_string(col_idx_[p]) +
                             ") has no equal mirror");
      }
  }

 private:
  friend SparseSym rescaled_laplacian(const SparseSym& a);
  friend SparseSym block_diag(const std::vector<const SparseSym*>& blocks);

  std::size_t n_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_idx_;
  std::vector<double> values_;
};

/// Row sums of a non-negative adjacency.
inline std::vector<double> degree_vector(const SparseSym& a) {
  std::vector<double> d(a.n(), 0.0);
  for (std::size_t i = 0; i < a.n(); ++i)
    for (std::size_t p = a.row_ptr()[i]; p < a.row_ptr()[i + 1]; ++p) {
      const double w = a.values()[p];
      if (w < 0.0) throw InvalidAdjacency("negative edge value in row " + std::to_string(i));
      d[i] += w;
    }
  return d;
}

/// L̃ = -D^{-1/2} A D^{-1/2}, i.e. the normalized Laplacian shifted by -I under λ_max = 2.
/// Degree-0 nodes get a zero row and column.
inline SparseSym rescaled_laplacian(const SparseSym& a) {
  const auto d = degree_vector(a);
  std::vector<double> inv_sqrt(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) inv_sqrt[i] = d[i] > 0.0 ? 1.0 / std::sqrt(d[i]) : 0.0;

  SparseSym l(a.n());
  l.row_ptr_ = a.row_ptr_;
  l.col_idx_ = a.col_idx_;
  l.values_.resize(a.nnz());
  for (std::size_t i = 0; i < a.n(); ++i)
    for (std::size_t p = a.row_ptr_[i]; p < a.row_ptr_[i + 1]; ++p) {
      const std::size_t j = a.col_idx_[p];
      // Same expression for (i, j) and (j, i) so the result is exactly symmetric.
      const double s = (i < j) ? inv_sqrt[i] * inv_sqrt[j] : inv_sqrt[j] * inv_sqrt[i];
      l.values_[p] = -a.values_[p] * s;
    }
  return l;
}

/// Block-diagonal concatenation; block b occupies rows/cols starting at the sum of earlier sizes.
inline SparseSym block_diag(const std::vector<const SparseSym*>& blocks) {
  std::size_t n = 0, nnz = 0;
  for (const auto* b : blocks) {
    n += b->n();
    nnz += b->nnz();
  }
  SparseSym out(n);
  out.col_idx_.reserve(nnz);
  out.values_.reserve(nnz);
  std::size_t offset = 0, row = 0;
  for (const auto* b : blocks) {
    for (std::size_t i = 0; i < b->n(); ++i, ++row) {
      for (std::size_t p = b->row_ptr_[i]; p < b->row_ptr_[i + 1]; ++p) {
        out.col_idx_.push_back(b->col_idx_[p] + offset);
        out.values_.push_back(b->values_[p]);
      }
      out.row_ptr_[row + 1] = out.col_idx_.size();
    }
    offset += b->n();
  }
  return out;
}

/// out += s * x
inline void spmm_acc(const SparseSym& s, const DenseMat& x, DenseMat& out, double scale = 1.0) {
  const std::size_t f = x.cols();
  const auto& rp = s.row_ptr();
  const auto& ci = s.col_idx();
  const auto& v = s.values();
  for (std::size_t i = 0; i < s.n(); ++i) {
    double* orow = out.data().data() + i * f;
    for (std::size_t p = rp[i]; p < rp[i + 1]; ++p) {
      const double w = scale * v[p];
      const double* xrow = x.data().data() + ci[p] * f;
      for (std::size_t c = 0; c < f; ++c) orow[c] += w * xrow[c];
    }
  }
}

/// Sparse-dense product; cost proportional to nnz * x.cols().
inline DenseMat spmm(const SparseSym& s, const DenseMat& x) {
  if (s.n() != x.rows())
    throw DimensionError("spmm: sparse n=" + std::to_string(s.n()) + " vs dense rows=" + std::to_string(x.rows()));
  DenseMat out(x.rows(), x.cols());
  spmm_acc(s, x, out);
  return out;
}

}  // namespace mgcheb
