#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "data_tu.hpp"
#include "eigen.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace mgcheb {

/// Random graph with n nodes and min(2n, n(n-1)/2) distinct undirected edges drawn uniformly
/// without replacement, unit weights, and one-hot features over `n_labels` random labels.
inline GraphRecord random_graph(std::size_t n, std::uint64_t seed, std::size_t n_labels = 7) {
  if (n < 2) throw DimensionError("random_graph: need n >= 2");
  if (n_labels == 0) throw DimensionError("random_graph: need at least one label");
  Rng rng(seed);
  const std::uint64_t max_pairs = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const std::uint64_t target = std::min<std::uint64_t>(2 * static_cast<std::uint64_t>(n), max_pairs);

  // Pair index p enumerates (u, v), u < v, row by row.
  auto decode = [n](std::uint64_t p) {
    std::size_t u = 0;
    std::uint64_t row = n - 1;
    while (p >= row) {
      p -= row;
      ++u;
      --row;
    }
    return std::pair<std::size_t, std::size_t>{u, u + 1 + static_cast<std::size_t>(p)};
  };

  std::vector<std::uint64_t> picked;
  if (2 * target >= max_pairs) {
    std::vector<std::uint64_t> all(max_pairs);
    for (std::uint64_t i = 0; i < max_pairs; ++i) all[i] = i;
    for (std::uint64_t i = 0; i < target; ++i) std::swap(all[i], all[i + rng.below(max_pairs - i)]);
    picked.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(target));
  } else {
    std::unordered_set<std::uint64_t> seen;
    while (picked.size() < target) {
      const std::uint64_t p = rng.below(max_pairs);
      if (seen.insert(p).second) picked.push_back(p);
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  edges.reserve(picked.size());
  if (n < 4096) {
    for (auto p : picked) edges.push_back(decode(p));
  } else {
    // Row offsets avoid the quadratic walk in decode() for big graphs.
    std::vector<std::uint64_t> start(n);
    for (std::size_t u = 1; u < n; ++u) start[u] = start[u - 1] + (n - u);
    for (auto p : picked) {
      const auto u = static_cast<std::size_t>(std::upper_bound(start.begin(), start.end(), p) - start.begin() - 1);
      edges.emplace_back(u, u + 1 + static_cast<std::size_t>(p - start[u]));
    }
  }
  std::vector<std::size_t> labels(n);
  for (auto& l : labels) l = static_cast<std::size_t>(rng.below(n_labels));
  return make_record(n, edges, std::move(labels), 0, n_labels);
}

struct BenchRow {
  FusionMethod fusion;
  std::size_t k_order;
  std::size_t n;
  std::size_t edges;
  double median_ms;
  double mad_ms;  // median absolute deviation
};

struct BenchResult {
  std::vector<BenchRow> rows;

  /// Columns: fusion,k,n,edges,median_ms,mad_ms
  std::string to_csv() const {
    std::ostringstream o;
    o << "fusion,k,n,edges,median_ms,mad_ms\n";
    for (const auto& r : rows)
      o << to_string(r.fusion) << "," << r.k_order << "," << r.n << "," << r.edges << "," << format_double(r.median_ms)
        << "," << format_double(r.mad_ms) << "\n";
    return o.str();
  }

  const BenchRow* find(FusionMethod f, std::size_t k, std::size_t n) const {
    for (const auto& r : rows)
      if (r.fusion == f && r.k_order == k && r.n == n) return &r;
    return nullptr;
  }
};

/// Defaults follow the widest architecture in the dataset table (ENZYMES). The relative cost
/// of the fusions depends on layer width: at narrow widths the C=128 projections dominate,
/// at wide ones the K^2 blocks of the 2d basis do.
struct BenchOptions {
  std::size_t warmup = 3;
  std::size_t iterations = 20;
  std::size_t x_in = 3;
  std::vector<std::size_t> conv_widths{32, 64, 512};
  std::size_t fc_width = 256;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Eval-mode forward time of the full network on one random graph per N. Two-relation
/// fusions get a second, independently drawn random graph over the same nodes.
inline BenchResult bench_forward(const std::vector<FusionMethod>& fusions, const std::vector<std::size_t>& k_orders,
                                 const std::vector<std::size_t>& n_grid, std::uint64_t seed,
                                 const BenchOptions& opts = {}) {
  if (opts.iterations < 20 || opts.warmup < 3) throw Error("bench_forward: need >= 20 iterations and >= 3 warmups");
  BenchResult out;
  for (auto n : n_grid) {
    const GraphRecord g = random_graph(n, derive_seed(seed, n, 0), opts.x_in);
    const GraphRecord g2 = random_graph(n, derive_seed(seed, n, 1), opts.x_in);
    const Batch single = make_batch(std::vector<const GraphRecord*>{&g});
    Batch dual = single;
    add_relation(dual, {&g2.adjacency});
    for (auto k : k_orders)
      for (auto f : fusions) {
        ModelConfig cfg;
        cfg.fusion = f;
        cfg.k_order = k;
        cfg.conv_widths = opts.conv_widths;
        cfg.fc_width = opts.fc_width;
        cfg.annotated_relations = f == FusionMethod::SingleEdge ? 1 : 2;
        Model model = Model::build(cfg, opts.x_in, derive_seed(seed, n, k + 2));
        const Batch& batch = f == FusionMethod::SingleEdge ? single : dual;
        std::vector<double> times;
        for (std::size_t it = 0; it < opts.warmup + opts.iterations; ++it) {
          const auto t0 = std::chrono::steady_clock::now();
          Tape tape;
          const Var logits = model.forward(tape, batch, false);
          const auto t1 = std::chrono::steady_clock::now();
          if (!logits.value().all_finite()) throw Error("bench_forward: non-finite output");
          if (it >= opts.warmup) times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        const double med = median(times);
        std::vector<double> dev;
        for (double t : times) dev.push_back(std::abs(t - med));
        out.rows.push_back({f, k, n, g.adjacency.nnz() / 2, med, median(dev)});
      }
  }
  return out;
}

/// Histogram of pooled eigenvalues of the rescaled Laplacian raised to each power.
struct EigenHistogram {
  std::size_t bins = 0;
  std::vector<int> powers;
  std::vector<std::vector<std::size_t>> counts;  // [power][bin]
  std::size_t total = 0;                          // eigenvalues pooled (per power)
  double min_value = 0.0;                         // extremes of the first power
  double max_value = 0.0;

  /// Index of the bin that contains 0.
  std::size_t central_bin() const { return bins / 2; }

  double central_mass(std::size_t power_index) const {
    return total ? static_cast<double>(counts[power_index][central_bin()]) / static_cast<double>(total) : 0.0;
  }

  /// Columns: bin_lo,bin_hi,power_<k>...
  std::string to_csv() const {
    std::ostringstream o;
    o << "bin_lo,bin_hi";
    for (int p : powers) o << ",power_" << p;
    o << "\n";
    for (std::size_t b = 0; b < bins; ++b) {
      o << format_double(-1.0 + 2.0 * static_cast<double>(b) / static_cast<double>(bins)) << ","
        << format_double(-1.0 + 2.0 * static_cast<double>(b + 1) / static_cast<double>(bins));
      for (std::size_t p = 0; p < powers.size(); ++p) o << "," << counts[p][b];
      o << "\n";
    }
    return o.str();
  }
};

inline std::size_t histogram_bin(double v, std::size_t bins) {
  const double t = (v + 1.0) / 2.0 * static_cast<double>(bins);
  if (!(t > 0.0)) return 0;
  return std::min(bins - 1, static_cast<std::size_t>(t));
}

inline EigenHistogram eigen_histogram(const std::vector<GraphRecord>& graphs, const std::vector<int>& powers,
                                      std::size_t bins = 21) {
  if (bins == 0) throw DimensionError("eigen_histogram: need at least one bin");
  if (powers.empty()) throw DimensionError("eigen_histogram: need at least one power");
  for (int p : powers)
    if (p < 1) throw DimensionError("eigen_histogram: powers must be >= 1");
  EigenHistogram h;
  h.bins = bins;
  h.powers = powers;
  h.counts.assign(powers.size(), std::vector<std::size_t>(bins, 0));
  h.min_value = 1.0;
  h.max_value = -1.0;
  for (const auto& g : graphs) {
    const auto eig = symmetric_eigen(rescaled_laplacian(g.adjacency).to_dense());
    for (double lambda : eig.values) {
      h.min_value = std::min(h.min_value, lambda);
      h.max_value = std::max(h.max_value, lambda);
      for (std::size_t p = 0; p < powers.size(); ++p) ++h.counts[p][histogram_bin(std::pow(lambda, powers[p]), bins)];
      ++h.total;
    }
  }
  return h;
}

}  // namespace mgcheb
