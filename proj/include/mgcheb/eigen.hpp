#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "dense.hpp"
#include "error.hpp"

namespace mgcheb {

struct EigenDecomposition {
  std::vector<double> values;  // ascending
  DenseMat vectors;            // column k is the eigenvector of values[k]
};

/// Dense symmetric eigendecomposition by cyclic Jacobi rotations.
/// Intended for analysis and test oracles on small graphs (n up to a few hundred).
inline EigenDecomposition symmetric_eigen(const DenseMat& m, int max_sweeps = 100) {
  if (m.rows() != m.cols()) throw DimensionError("symmetric_eigen: matrix is " + m.shape_str());
  const std::size_t n = m.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(m(i, j) - m(j, i)) > 1e-10) throw NotSymmetric("symmetric_eigen: input is not symmetric");

  DenseMat a = m;
  DenseMat v = DenseMat::identity(n);

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
    return s;
  };
  double scale = 0.0;
  for (double x : a.data()) scale += x * x;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    if (off_norm() <= 1e-30 * std::max(scale, 1e-300)) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p), aqq = a(q, q);
        // Rotation angle chosen to zero a(p, q); t is the smaller root of t^2 + 2 theta t - 1 = 0.
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

  EigenDecomposition out;
  out.values.resize(n);
  out.vectors = DenseMat(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
  }
  return out;
}

/// U diag(f(λ)) Uᵀ x, for applying a spectral filter through an explicit eigenbasis.
template <typename F>
DenseMat apply_spectral(const EigenDecomposition& e, F&& f, const DenseMat& x) {
  const std::size_t n = e.values.size();
  if (x.rows() != n) throw DimensionError("apply_spectral: row mismatch");
  DenseMat ut_x(n, x.cols());
  gemm_tn_acc(e.vectors, x, ut_x);
  for (std::size_t k = 0; k < n; ++k) {
    const double g = f(e.values[k]);
    for (auto& val : ut_x.row(k)) val *= g;
  }
  return matmul(e.vectors, ut_x);
}

}  // namespace mgcheb
