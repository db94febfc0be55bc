#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dense.hpp"
#include "sparse.hpp"

namespace mgcheb {

/// Column-wise concatenation [b0 | b1 | ...]; all blocks share the row count.
inline DenseMat concat_blocks(const std::vector<DenseMat>& blocks) {
  if (blocks.empty()) return {};
  const std::size_t n = blocks.front().rows();
  std::size_t cols = 0;
  for (const auto& b : blocks) {
    if (b.rows() != n) throw DimensionError("concat_blocks: row mismatch");
    cols += b.cols();
  }
  DenseMat out(n, cols);
  std::size_t off = 0;
  for (const auto& b : blocks) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < b.cols(); ++c) out(i, off + c) = b(i, c);
    off += b.cols();
  }
  return out;
}

/// Features projected onto T_0(L̃), ..., T_{K-1}(L̃).
struct ChebBasis {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<DenseMat> blocks;  // blocks[k] = T_k(L̃) X

  /// [T_0 X | T_1 X | ... | T_{K-1} X], shape n × f·K.
  DenseMat concatenated() const { return concat_blocks(blocks); }
};

/// Three-term recurrence T_k = 2 L̃ T_{k-1} - T_{k-2}. Cost O(K · nnz · f).
inline ChebBasis project(const SparseSym& lap, const DenseMat& x, std::size_t k_order) {
  if (k_order == 0) throw DimensionError("project: Chebyshev order must be >= 1");
  if (lap.n() != x.rows())
    throw DimensionError("project: Laplacian n=" + std::to_string(lap.n()) + " vs features rows=" +
                         std::to_string(x.rows()));
  ChebBasis basis;
  basis.n = x.rows();
  basis.k = k_order;
  basis.blocks.reserve(k_order);
  basis.blocks.push_back(x);
  if (k_order > 1) basis.blocks.push_back(spmm(lap, x));
  for (std::size_t k = 2; k < k_order; ++k) {
    DenseMat next = basis.blocks[k - 2] * -1.0;
    spmm_acc(lap, basis.blocks[k - 1], next, 2.0);
    basis.blocks.push_back(std::move(next));
  }
  return basis;
}

/// Two-variable product basis: blocks X̄_ij = T_i(L̃_a) T_j(L̃_b) X for i, j < K, concatenated
/// with i outer and j inner. Shape n × f·K².
inline DenseMat project_2d(const SparseSym& lap_a, const SparseSym& lap_b, const DenseMat& x, std::size_t k_order) {
  if (lap_a.n() != lap_b.n()) throw DimensionError("project_2d: Laplacians differ in size");
  const ChebBasis inner = project(lap_b, x, k_order);
  std::vector<DenseMat> blocks(k_order * k_order);
  for (std::size_t j = 0; j < k_order; ++j) {
    ChebBasis outer = project(lap_a, inner.blocks[j], k_order);
    for (std::size_t i = 0; i < k_order; ++i) blocks[i * k_order + j] = std::move(outer.blocks[i]);
  }
  return concat_blocks(blocks);
}

/// Product basis over an arbitrary relation list. Only two relations are supported; the
/// K^R growth makes more impractical.
inline DenseMat project_product(const std::vector<SparseSym>& laps, const DenseMat& x, std::size_t k_order) {
  if (laps.size() != 2)
    throw DimensionError("project_product: product basis supports exactly 2 relations, got " +
                         std::to_string(laps.size()));
  return project_2d(laps[0], laps[1], x, k_order);
}

}  // namespace mgcheb
