#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dense.hpp"
#include "error.hpp"
#include "rng.hpp"
#include "sparse.hpp"

namespace mgcheb {

/// One labeled graph with one-hot node features.
struct GraphRecord {
  std::size_t n = 0;
  SparseSym adjacency;                   // unit weights, symmetric, no self-loops
  std::vector<std::size_t> node_labels;  // dense 0-based
  std::size_t graph_label = 0;           // dense 0-based
  DenseMat features;                     // n × x_in one-hot

  friend bool operator==(const GraphRecord& a, const GraphRecord& b) {
    return a.n == b.n && a.graph_label == b.graph_label && a.node_labels == b.node_labels &&
           a.adjacency.row_ptr() == b.adjacency.row_ptr() && a.adjacency.col_idx() == b.adjacency.col_idx() &&
           a.adjacency.values() == b.adjacency.values() && a.features.same_shape(b.features) &&
           a.features.data() == b.features.data();
  }
};

struct Dataset {
  std::string name;
  std::vector<GraphRecord> graphs;
  std::size_t x_in = 0;
  std::size_t n_classes = 0;

  std::vector<std::size_t> labels() const {
    std::vector<std::size_t> y;
    y.reserve(graphs.size());
    for (const auto& g : graphs) y.push_back(g.graph_label);
    return y;
  }
};

inline DenseMat one_hot(const std::vector<std::size_t>& labels, std::size_t width) {
  DenseMat x(labels.size(), width);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= width) throw DimensionError("one_hot: label exceeds width");
    x(i, labels[i]) = 1.0;
  }
  return x;
}

/// Builds a record from 0-based undirected edges; duplicates and reciprocal pairs collapse to a
/// single unit edge and self-loops are dropped.
inline GraphRecord make_record(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                               std::vector<std::size_t> node_labels, std::size_t graph_label, std::size_t x_in) {
  std::set<std::pair<std::size_t, std::size_t>> unique;
  for (auto [u, v] : edges) {
    if (u == v) continue;
    unique.emplace(std::min(u, v), std::max(u, v));
  }
  std::vector<Edge> list;
  list.reserve(unique.size());
  for (auto [u, v] : unique) list.push_back({u, v, 1.0});
  GraphRecord g;
  g.n = n;
  g.adjacency = SparseSym::from_edges(n, list);
  g.features = one_hot(node_labels, x_in);
  g.node_labels = std::move(node_labels);
  g.graph_label = graph_label;
  return g;
}

namespace detail {

/// Integer rows of a comma/whitespace separated text file, one vector per non-empty line
/// (line numbers are 1-based).
inline std::vector<std::pair<std::size_t, std::vector<long long>>> read_int_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError(path.string(), 0, "missing file");
  std::vector<std::pair<std::size_t, std::vector<long long>>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::vector<long long> vals;
    std::size_t pos = 0;
    while (pos < line.size()) {
      while (pos < line.size() && (line[pos] == ',' || std::isspace(static_cast<unsigned char>(line[pos])))) ++pos;
      if (pos >= line.size()) break;
      std::size_t end = pos;
      while (end < line.size() && line[end] != ',' && !std::isspace(static_cast<unsigned char>(line[end]))) ++end;
      long long v = 0;
      const auto res = std::from_chars(line.data() + pos, line.data() + end, v);
      if (res.ec != std::errc() || res.ptr != line.data() + end)
        throw DatasetError(path.string(), lineno, "non-integer token '" + line.substr(pos, end - pos) + "'");
      vals.push_back(v);
      pos = end;
    }
    if (!vals.empty()) rows.emplace_back(lineno, std::move(vals));
  }
  return rows;
}

/// Map sorted distinct values to 0..k-1.
inline std::map<long long, std::size_t> dense_remap(const std::vector<long long>& values) {
  std::map<long long, std::size_t> m;
  for (auto v : values) m.emplace(v, 0);
  std::size_t k = 0;
  for (auto& [v, idx] : m) idx = k++;
  return m;
}

}  // namespace detail

/// Reads `<dir>/<name>_{A,graph_indicator,graph_labels,node_labels}.txt`. Node and graph ids in
/// the files are 1-based; labels are remapped to dense 0-based ranges in sorted order. Other
/// files (edge labels, attributes) are ignored.
inline Dataset parse_tu(const std::filesystem::path& dir, const std::string& name) {
  namespace fs = std::filesystem;
  const fs::path f_a = dir / (name + "_A.txt");
  const fs::path f_ind = dir / (name + "_graph_indicator.txt");
  const fs::path f_gl = dir / (name + "_graph_labels.txt");
  const fs::path f_nl = dir / (name + "_node_labels.txt");
  for (const auto& f : {f_a, f_ind, f_gl, f_nl})
    if (!fs::exists(f)) throw DatasetError(f.string(), 0, "missing file");

  auto single_column = [](const fs::path& p) {
    std::vector<std::pair<std::size_t, long long>> out;
    for (auto& [ln, vals] : detail::read_int_rows(p)) {
      if (vals.size() != 1) throw DatasetError(p.string(), ln, "expected one integer per line");
      out.emplace_back(ln, vals[0]);
    }
    return out;
  };

  const auto graph_labels = single_column(f_gl);
  const auto indicator = single_column(f_ind);
  const auto node_labels = single_column(f_nl);
  const std::size_t n_graphs = graph_labels.size();
  const std::size_t n_nodes = indicator.size();
  if (node_labels.size() != n_nodes)
    throw DatasetError(f_nl.string(), 0,
                       "has " + std::to_string(node_labels.size()) + " entries for " + std::to_string(n_nodes) + " nodes");

  std::vector<std::size_t> graph_of(n_nodes), local(n_nodes);
  std::vector<std::size_t> sizes(n_graphs, 0);
  for (std::size_t v = 0; v < n_nodes; ++v) {
    const auto [ln, gid] = indicator[v];
    if (gid < 1 || static_cast<std::size_t>(gid) > n_graphs)
      throw DatasetError(f_ind.string(), ln, "node " + std::to_string(v + 1) + " references absent graph " + std::to_string(gid));
    graph_of[v] = static_cast<std::size_t>(gid - 1);
    local[v] = sizes[graph_of[v]]++;
  }
  for (std::size_t g = 0; g < n_graphs; ++g)
    if (sizes[g] == 0) throw DatasetError(f_gl.string(), g + 1, "graph " + std::to_string(g + 1) + " has no nodes");

  std::vector<long long> raw_nl, raw_gl;
  for (auto& [ln, v] : node_labels) raw_nl.push_back(v);
  for (auto& [ln, v] : graph_labels) raw_gl.push_back(v);
  const auto nl_map = detail::dense_remap(raw_nl);
  const auto gl_map = detail::dense_remap(raw_gl);

  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> edges(n_graphs);
  for (auto& [ln, vals] : detail::read_int_rows(f_a)) {
    if (vals.size() != 2) throw DatasetError(f_a.string(), ln, "expected a node pair");
    for (auto v : vals)
      if (v < 1 || static_cast<std::size_t>(v) > n_nodes)
        throw DatasetError(f_a.string(), ln, "node id " + std::to_string(v) + " out of range");
    const std::size_t u = static_cast<std::size_t>(vals[0] - 1), w = static_cast<std::size_t>(vals[1] - 1);
    if (graph_of[u] != graph_of[w]) throw DatasetError(f_a.string(), ln, "edge joins nodes of different graphs");
    edges[graph_of[u]].emplace_back(local[u], local[w]);
  }

  std::vector<std::vector<std::size_t>> labels(n_graphs);
  for (std::size_t v = 0; v < n_nodes; ++v) labels[graph_of[v]].push_back(nl_map.at(raw_nl[v]));

  Dataset ds;
  ds.name = name;
  ds.x_in = nl_map.size();
  ds.n_classes = gl_map.size();
  ds.graphs.reserve(n_graphs);
  for (std::size_t g = 0; g < n_graphs; ++g)
    ds.graphs.push_back(make_record(sizes[g], edges[g], std::move(labels[g]), gl_map.at(raw_gl[g]), ds.x_in));
  return ds;
}

/// Writes records in the same four-file layout (both directions of each edge, dense labels).
inline void write_tu(const std::filesystem::path& dir, const std::string& name, const std::vector<GraphRecord>& graphs) {
  std::filesystem::create_directories(dir);
  std::ofstream fa(dir / (name + "_A.txt")), fi(dir / (name + "_graph_indicator.txt")),
      fg(dir / (name + "_graph_labels.txt")), fn(dir / (name + "_node_labels.txt"));
  if (!fa || !fi || !fg || !fn) throw DatasetError(dir.string(), 0, "cannot write dataset files");
  std::size_t offset = 0;
  for (std::size_t g = 0; g < graphs.size(); ++g) {
    const auto& r = graphs[g];
    fg << r.graph_label << "\n";
    for (std::size_t i = 0; i < r.n; ++i) {
      fi << (g + 1) << "\n";
      fn << r.node_labels[i] << "\n";
      for (std::size_t p = r.adjacency.row_ptr()[i]; p < r.adjacency.row_ptr()[i + 1]; ++p)
        fa << (offset + i + 1) << ", " << (offset + r.adjacency.col_idx()[p] + 1) << "\n";
    }
    offset += r.n;
  }
}

/// Several graphs stacked block-diagonally.
struct Batch {
  std::size_t n_graphs = 0;
  std::vector<std::size_t> segments;  // node -> graph position in the batch, non-decreasing
  std::vector<SparseSym> laplacians;  // annotated relations, each block-diagonal
  DenseMat features;
  std::vector<std::size_t> labels;

  std::size_t n_nodes() const { return segments.size(); }
};

inline Batch make_batch(const std::vector<const GraphRecord*>& records) {
  if (records.empty()) throw DimensionError("make_batch: no records");
  const std::size_t width = records.front()->features.cols();
  std::size_t n = 0;
  std::vector<const SparseSym*> adj;
  for (const auto* r : records) {
    if (r->features.cols() != width) throw DimensionError("make_batch: feature width mismatch");
    if (r->features.rows() != r->n || r->adjacency.n() != r->n) throw DimensionError("make_batch: inconsistent record");
    n += r->n;
    adj.push_back(&r->adjacency);
  }
  Batch b;
  b.n_graphs = records.size();
  b.segments.reserve(n);
  b.features = DenseMat(n, width);
  std::size_t row = 0;
  for (std::size_t g = 0; g < records.size(); ++g) {
    const auto* r = records[g];
    for (std::size_t i = 0; i < r->n; ++i, ++row) {
      b.segments.push_back(g);
      std::copy(r->features.row(i).begin(), r->features.row(i).end(), b.features.row(row).begin());
    }
    b.labels.push_back(r->graph_label);
  }
  b.laplacians.push_back(rescaled_laplacian(block_diag(adj)));
  return b;
}

inline Batch make_batch(const std::vector<GraphRecord>& records) {
  std::vector<const GraphRecord*> ptrs;
  for (const auto& r : records) ptrs.push_back(&r);
  return make_batch(ptrs);
}

/// Appends one more annotated relation given per-graph adjacencies in batch order.
inline void add_relation(Batch& b, const std::vector<const SparseSym*>& adjacencies) {
  if (adjacencies.size() != b.n_graphs) throw DimensionError("add_relation: one adjacency per graph required");
  SparseSym lap = rescaled_laplacian(block_diag(adjacencies));
  if (lap.n() != b.n_nodes()) throw DimensionError("add_relation: node count mismatch");
  b.laplacians.push_back(std::move(lap));
}

/// k disjoint test index sets covering the dataset.
struct FoldPlan {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::size_t>> folds;

  std::vector<std::size_t> train_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t f = 0; f < folds.size(); ++f)
      if (f != fold) out.insert(out.end(), folds[f].begin(), folds[f].end());
    std::sort(out.begin(), out.end());
    return out;
  }
};

/// Stratified k-fold split: each class is shuffled and dealt round-robin, continuing the deal
/// across classes, so fold sizes differ by at most one and every fold holds each class within
/// one sample of its share. Classes smaller than k just spread over fewer folds.
inline FoldPlan stratified_folds(const std::vector<std::size_t>& labels, std::size_t k, std::uint64_t seed) {
  if (k == 0 || k > labels.size())
    throw DimensionError("stratified_folds: k=" + std::to_string(k) + " for " + std::to_string(labels.size()) + " samples");
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  Rng rng(seed);
  FoldPlan plan{k, seed, std::vector<std::vector<std::size_t>>(k)};
  std::size_t t = 0;
  for (auto& [cls, idx] : by_class) {
    rng.shuffle(idx);
    for (auto i : idx) plan.folds[t++ % k].push_back(i);
  }
  for (auto& f : plan.folds) std::sort(f.begin(), f.end());
  return plan;
}

}  // namespace mgcheb
