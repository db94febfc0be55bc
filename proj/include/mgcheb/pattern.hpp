#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "autodiff.hpp"

namespace mgcheb {

/// Sparsity pattern holding every ordered node pair (i, j), i == j included, that lies in the
/// same graph of a batch. Values over the pattern are carried as nnz × 1 Vars; this is the
/// storage for learned adjacencies, which are dense within each graph and zero across graphs.
struct PairPattern {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<std::size_t> col_idx;
  std::vector<std::size_t> row_of;     // row index of each entry
  std::vector<std::size_t> transpose;  // entry index of (j, i) for entry (i, j)

  std::size_t nnz() const noexcept { return col_idx.size(); }

  /// `segments` maps node -> graph id and must list each graph's nodes contiguously.
  static std::shared_ptr<const PairPattern> within_segments(const std::vector<std::size_t>& segments) {
    auto p = std::make_shared<PairPattern>();
    p->n = segments.size();
    p->row_ptr.assign(p->n + 1, 0);
    std::size_t start = 0;
    while (start < p->n) {
      std::size_t end = start + 1;
      while (end < p->n && segments[end] == segments[start]) ++end;
      for (std::size_t later = end; later < p->n; ++later)
        if (segments[later] == segments[start])
          throw DimensionError("PairPattern: graph " + std::to_string(segments[start]) + " is not contiguous");
      const std::size_t size = end - start;
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t base = p->col_idx.size();
        for (std::size_t j = start; j < end; ++j) {
          p->col_idx.push_back(j);
          p->row_of.push_back(i);
        }
        p->row_ptr[i + 1] = base + size;
      }
      start = end;
    }
    p->transpose.resize(p->nnz());
    for (std::size_t i = 0; i < p->n; ++i) {
      const std::size_t first_col = p->col_idx.empty() ? 0 : p->col_idx[p->row_ptr[i]];
      for (std::size_t e = p->row_ptr[i]; e < p->row_ptr[i + 1]; ++e) {
        const std::size_t j = p->col_idx[e];
        p->transpose[e] = p->row_ptr[j] + (i - first_col);
      }
    }
    return p;
  }
};

using PatternPtr = std::shared_ptr<const PairPattern>;

namespace ad {

inline void require_pattern_values(const Var& v, const PairPattern& p, const char* what) {
  if (v.rows() != p.nnz() || v.cols() != 1)
    throw DimensionError(std::string(what) + ": values " + v.value().shape_str() + " vs pattern nnz " +
                         std::to_string(p.nnz()));
}

/// out[e] = a[row(e)] + b[col(e)] for every pattern entry. Realizes a linear layer acting on
/// the concatenated pair [x_i, x_j] when a = x·W_top and b = x·W_bottom.
inline Var pair_gather_add(const Var& a, const Var& b, const PatternPtr& p) {
  same_tape(a, b);
  if (a.rows() != p->n || b.rows() != p->n || a.cols() != b.cols())
    throw DimensionError("pair_gather_add: operand shapes do not match pattern");
  const std::size_t h = a.cols();
  DenseMat out(p->nnz(), h);
  for (std::size_t e = 0; e < p->nnz(); ++e) {
    const auto ar = a.value().row(p->row_of[e]);
    const auto br = b.value().row(p->col_idx[e]);
    auto o = out.row(e);
    for (std::size_t c = 0; c < h; ++c) o[c] = ar[c] + br[c];
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), a.requires_grad() || b.requires_grad(), [ia, ib, p](Tape& t, std::size_t self) {
    const DenseMat& g = t.grad(self);
    const std::size_t h = g.cols();
    if (t.requires_grad(ia)) {
      DenseMat& ga = t.grad(ia);
      for (std::size_t e = 0; e < p->nnz(); ++e) {
        auto d = ga.row(p->row_of[e]);
        const auto s = g.row(e);
        for (std::size_t c = 0; c < h; ++c) d[c] += s[c];
      }
    }
    if (t.requires_grad(ib)) {
      DenseMat& gb = t.grad(ib);
      for (std::size_t e = 0; e < p->nnz(); ++e) {
        auto d = gb.row(p->col_idx[e]);
        const auto s = g.row(e);
        for (std::size_t c = 0; c < h; ++c) d[c] += s[c];
      }
    }
  });
}

/// Softmax of pattern values within each row; entries outside the pattern are implicitly 0.
inline Var pattern_softmax(const Var& scores, const PatternPtr& p) {
  require_pattern_values(scores, *p, "pattern_softmax");
  const DenseMat& x = scores.value();
  DenseMat out(p->nnz(), 1);
  for (std::size_t i = 0; i < p->n; ++i) {
    const std::size_t b = p->row_ptr[i], e = p->row_ptr[i + 1];
    if (b == e) throw DimensionError("pattern_softmax: row " + std::to_string(i) + " is empty");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = b; k < e; ++k) mx = std::max(mx, x[k]);
    double s = 0.0;
    for (std::size_t k = b; k < e; ++k) s += (out[k] = std::exp(x[k] - mx));
    for (std::size_t k = b; k < e; ++k) out[k] /= s;
  }
  const std::size_t is = scores.id();
  return scores.tape().record(std::move(out), scores.requires_grad(), [is, p](Tape& t, std::size_t self) {
    const DenseMat& y = t.value(self);
    const DenseMat& g = t.grad(self);
    DenseMat& gs = t.grad(is);
    for (std::size_t i = 0; i < p->n; ++i) {
      double dot = 0.0;
      for (std::size_t k = p->row_ptr[i]; k < p->row_ptr[i + 1]; ++k) dot += g[k] * y[k];
      for (std::size_t k = p->row_ptr[i]; k < p->row_ptr[i + 1]; ++k) gs[k] += y[k] * (g[k] - dot);
    }
  });
}

/// (E + Eᵀ) / 2 over pattern values.
inline Var pattern_symmetrize(const Var& values, const PatternPtr& p) {
  require_pattern_values(values, *p, "pattern_symmetrize");
  const DenseMat& v = values.value();
  DenseMat out(p->nnz(), 1);
  for (std::size_t e = 0; e < p->nnz(); ++e) out[e] = 0.5 * (v[e] + v[p->transpose[e]]);
  const std::size_t iv = values.id();
  return values.tape().record(std::move(out), values.requires_grad(), [iv, p](Tape& t, std::size_t self) {
    const DenseMat& g = t.grad(self);
    DenseMat& gv = t.grad(iv);
    for (std::size_t e = 0; e < p->nnz(); ++e) {
      gv[e] += 0.5 * g[e];
      gv[p->transpose[e]] += 0.5 * g[e];
    }
  });
}

/// -D^{-1/2} A D^{-1/2} on pattern values, D = row sums of A (symmetric, non-negative).
/// Zero-degree rows map to zero.
inline Var pattern_rescaled_laplacian(const Var& values, const PatternPtr& p) {
  require_pattern_values(values, *p, "pattern_rescaled_laplacian");
  const DenseMat& a = values.value();
  std::vector<double> inv_sqrt(p->n, 0.0);
  for (std::size_t i = 0; i < p->n; ++i) {
    double d = 0.0;
    for (std::size_t k = p->row_ptr[i]; k < p->row_ptr[i + 1]; ++k) d += a[k];
    if (d < 0.0) throw InvalidAdjacency("pattern_rescaled_laplacian: negative degree");
    inv_sqrt[i] = d > 0.0 ? 1.0 / std::sqrt(d) : 0.0;
  }
  DenseMat out(p->nnz(), 1);
  for (std::size_t e = 0; e < p->nnz(); ++e) out[e] = -a[e] * inv_sqrt[p->row_of[e]] * inv_sqrt[p->col_idx[e]];
  const std::size_t iv = values.id();
  return values.tape().record(std::move(out), values.requires_grad(), [iv, p, inv_sqrt](Tape& t, std::size_t self) {
    const DenseMat& g = t.grad(self);
    const DenseMat& a = t.value(iv);
    DenseMat& ga = t.grad(iv);
    // out_e = -a_e s_i s_j with s = d^{-1/2}, ds/dd = -s^3 / 2.
    std::vector<double> d_degree(p->n, 0.0);
    for (std::size_t e = 0; e < p->nnz(); ++e) {
      const std::size_t i = p->row_of[e], j = p->col_idx[e];
      const double si = inv_sqrt[i], sj = inv_sqrt[j];
      ga[e] += -g[e] * si * sj;
      const double common = -g[e] * a[e];
      d_degree[i] += common * sj * (-0.5 * si * si * si);
      d_degree[j] += common * si * (-0.5 * sj * sj * sj);
    }
    for (std::size_t e = 0; e < p->nnz(); ++e) ga[e] += d_degree[p->row_of[e]];
  });
}

/// Pattern-valued matrix times dense features: out_i = Σ_j v_ij x_j.
inline Var pattern_spmm(const Var& values, const PatternPtr& p, const Var& x) {
  same_tape(values, x);
  require_pattern_values(values, *p, "pattern_spmm");
  if (x.rows() != p->n) throw DimensionError("pattern_spmm: feature rows do not match pattern size");
  const std::size_t f = x.cols();
  const DenseMat& v = values.value();
  const DenseMat& xv = x.value();
  DenseMat out(p->n, f);
  for (std::size_t e = 0; e < p->nnz(); ++e) {
    const double w = v[e];
    auto o = out.row(p->row_of[e]);
    const auto xr = xv.row(p->col_idx[e]);
    for (std::size_t c = 0; c < f; ++c) o[c] += w * xr[c];
  }
  const std::size_t iv = values.id(), ix = x.id();
  return values.tape().record(std::move(out), values.requires_grad() || x.requires_grad(),
                              [iv, ix, p](Tape& t, std::size_t self) {
                                const DenseMat& g = t.grad(self);
                                const std::size_t f = g.cols();
                                if (t.requires_grad(ix)) {
                                  const DenseMat& v = t.value(iv);
                                  DenseMat& gx = t.grad(ix);
                                  for (std::size_t e = 0; e < p->nnz(); ++e) {
                                    auto d = gx.row(p->col_idx[e]);
                                    const auto gr = g.row(p->row_of[e]);
                                    for (std::size_t c = 0; c < f; ++c) d[c] += v[e] * gr[c];
                                  }
                                }
                                if (t.requires_grad(iv)) {
                                  const DenseMat& xv = t.value(ix);
                                  DenseMat& gv = t.grad(iv);
                                  for (std::size_t e = 0; e < p->nnz(); ++e) {
                                    const auto gr = g.row(p->row_of[e]);
                                    const auto xr = xv.row(p->col_idx[e]);
                                    double s = 0.0;
                                    for (std::size_t c = 0; c < f; ++c) s += gr[c] * xr[c];
                                    gv[e] += s;
                                  }
                                }
                              });
}

/// Fused Chebyshev step 2·S·a - b for a pattern-valued S.
inline Var pattern_cheb_step(const Var& values, const PatternPtr& p, const Var& a, const Var& b) {
  return sub(scalar_mul(pattern_spmm(values, p, a), 2.0), b);
}

/// Dense n × n view of pattern values; zeros outside the pattern.
inline Var pattern_to_dense(const Var& values, const PatternPtr& p) {
  require_pattern_values(values, *p, "pattern_to_dense");
  DenseMat out(p->n, p->n);
  for (std::size_t e = 0; e < p->nnz(); ++e) out(p->row_of[e], p->col_idx[e]) = values.value()[e];
  const std::size_t iv = values.id();
  return values.tape().record(std::move(out), values.requires_grad(), [iv, p](Tape& t, std::size_t self) {
    const DenseMat& g = t.grad(self);
    DenseMat& gv = t.grad(iv);
    for (std::size_t e = 0; e < p->nnz(); ++e) gv[e] += g(p->row_of[e], p->col_idx[e]);
  });
}

}  // namespace ad
}  // namespace mgcheb
