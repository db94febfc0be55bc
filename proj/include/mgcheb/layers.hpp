#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "autodiff.hpp"
#include "pattern.hpp"
#include "rng.hpp"
#include "sparse.hpp"

namespace mgcheb {

enum class FusionMethod { SingleEdge, Concat, TwoDCheb, Multiply, Sum, MultiplyShared, SumShared };

inline constexpr FusionMethod kAllFusions[] = {FusionMethod::SingleEdge, FusionMethod::Concat,
                                               FusionMethod::TwoDCheb,   FusionMethod::Multiply,
                                               FusionMethod::Sum,        FusionMethod::MultiplyShared,
                                               FusionMethod::SumShared};

inline std::string_view to_string(FusionMethod f) {
  switch (f) {
    case FusionMethod::SingleEdge: return "single";
    case FusionMethod::Concat: return "concat";
    case FusionMethod::TwoDCheb: return "2d";
    case FusionMethod::Multiply: return "multiply";
    case FusionMethod::Sum: return "sum";
    case FusionMethod::MultiplyShared: return "multiply-shared";
    case FusionMethod::SumShared: return "sum-shared";
  }
  return "?";
}

inline std::optional<FusionMethod> parse_fusion(std::string_view s) {
  for (auto f : kAllFusions)
    if (to_string(f) == s) return f;
  if (s == "single-edge") return FusionMethod::SingleEdge;
  if (s == "2d-cheb") return FusionMethod::TwoDCheb;
  if (s == "m-shared") return FusionMethod::MultiplyShared;
  if (s == "s-shared") return FusionMethod::SumShared;
  return std::nullopt;
}

inline bool uses_projection(FusionMethod f) {
  return f == FusionMethod::Multiply || f == FusionMethod::Sum || f == FusionMethod::MultiplyShared ||
         f == FusionMethod::SumShared;
}
inline bool is_shared(FusionMethod f) { return f == FusionMethod::MultiplyShared || f == FusionMethod::SumShared; }
inline bool is_multiplicative(FusionMethod f) {
  return f == FusionMethod::Multiply || f == FusionMethod::MultiplyShared;
}

/// Throws unless `relations` is a legal relation count for the fusion variant.
inline void check_relation_count(FusionMethod f, std::size_t relations) {
  if (relations == 0) throw DimensionError("fusion " + std::string(to_string(f)) + ": no relations");
  if (f == FusionMethod::SingleEdge && relations != 1)
    throw DimensionError("fusion single: requires exactly 1 relation, got " + std::to_string(relations));
  if (f == FusionMethod::TwoDCheb && relations != 2)
    throw DimensionError("fusion 2d: requires exactly 2 relations, got " + std::to_string(relations));
}

/// Uniform in ±sqrt(6 / (fan_in + fan_out)).
inline DenseMat glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  DenseMat w(fan_in, fan_out);
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : w.data()) v = rng.uniform(-a, a);
  return w;
}

/// A relation type as seen by a conv layer: an annotated Laplacian (constant) or a learned
/// Laplacian whose values live on the tape.
struct Relation {
  const SparseSym* fixed = nullptr;
  PatternPtr pattern;
  Var values;

  static Relation annotated(const SparseSym& lap) { return Relation{&lap, nullptr, {}}; }
  static Relation learned(PatternPtr p, Var v) { return Relation{nullptr, std::move(p), v}; }

  std::size_t n() const { return fixed ? fixed->n() : pattern->n; }

  Var apply(const Var& x) const { return fixed ? ad::spmm(*fixed, x) : ad::pattern_spmm(values, pattern, x); }

  Var cheb_step(const Var& a, const Var& b) const {
    return fixed ? ad::cheb_step(*fixed, a, b) : ad::pattern_cheb_step(values, pattern, a, b);
  }
};

/// [T_0 X, T_1 X, ..., T_{K-1} X] on the tape.
inline std::vector<Var> cheb_blocks(const Relation& rel, const Var& x, std::size_t k_order) {
  if (k_order == 0) throw DimensionError("cheb_blocks: order must be >= 1");
  if (rel.n() != x.rows()) throw DimensionError("cheb_blocks: relation size does not match feature rows");
  std::vector<Var> blocks{x};
  if (k_order > 1) blocks.push_back(rel.apply(x));
  for (std::size_t k = 2; k < k_order; ++k) blocks.push_back(rel.cheb_step(blocks[k - 1], blocks[k - 2]));
  return blocks;
}

/// Chebyshev graph convolution over one or more relations.
///
///   single    Y = [T_0 X | ... | T_{K-1} X] Θ
///   concat    Y = [X̄⁽⁰⁾ | ... | X̄⁽ᴿ⁻¹⁾] Θ
///   2d        Y = [X̄₀₀ | X̄₀₁ | ... | X̄_{K-1,K-1}] Θ, X̄ᵢⱼ = Tᵢ(L̃⁽⁰⁾) Tⱼ(L̃⁽¹⁾) X
///   multiply  Y = (⊙_r tanh(X̄⁽ʳ⁾ W_r + b_r)) Θ      (sum: + instead of ⊙)
///   *-shared  one (W, b) for every relation
///
/// Θ has no bias. Projection biases are excluded from param_count().
class ConvLayer {
 public:
  ConvLayer(FusionMethod fusion, std::size_t in_features, std::size_t out_features, std::size_t k_order,
            std::size_t relations, std::size_t proj_hidden, Rng& rng, const std::string& prefix = "conv")
      : fusion_(fusion), in_(in_features), out_(out_features), k_(k_order), r_(relations), c_(proj_hidden) {
    check_relation_count(fusion, relations);
    if (k_order == 0 || in_features == 0 || out_features == 0) throw DimensionError("ConvLayer: zero dimension");
    std::size_t theta_rows = 0;
    switch (fusion) {
      case FusionMethod::SingleEdge: theta_rows = in_ * k_; break;
      case FusionMethod::Concat: theta_rows = in_ * k_ * r_; break;
      case FusionMethod::TwoDCheb: theta_rows = in_ * k_ * k_; break;
      default: theta_rows = c_; break;
    }
    if (uses_projection(fusion)) {
      if (c_ == 0) throw DimensionError("ConvLayer: projection width must be positive");
      const std::size_t n_proj = is_shared(fusion) ? 1 : r_;
      for (std::size_t r = 0; r < n_proj; ++r) {
        const std::string tag = prefix + ".proj" + std::to_string(r);
        proj_w_.emplace_back(tag + ".w", glorot(in_ * k_, c_, rng));
        proj_b_.emplace_back(tag + ".b", DenseMat(1, c_), false);
      }
    }
    theta_ = Parameter(prefix + ".theta", glorot(theta_rows, out_, rng));
  }

  FusionMethod fusion() const noexcept { return fusion_; }
  std::size_t in_features() const noexcept { return in_; }
  std::size_t out_features() const noexcept { return out_; }
  std::size_t k_order() const noexcept { return k_; }
  std::size_t relations() const noexcept { return r_; }

  /// Weight count excluding biases.
  std::size_t param_count() const {
    std::size_t n = theta_.value.size();
    for (const auto& w : proj_w_) n += w.value.size();
    return n;
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> ps{&theta_};
    for (auto& w : proj_w_) ps.push_back(&w);
    for (auto& b : proj_b_) ps.push_back(&b);
    return ps;
  }

  Parameter& theta() { return theta_; }
  std::vector<Parameter>& projection_weights() { return proj_w_; }
  std::vector<Parameter>& projection_biases() { return proj_b_; }

  /// The representation multiplied by Θ: the concatenated basis, or the fused projections.
  Var fused(Tape& tape, const std::vector<Relation>& relations, const Var& x) {
    if (relations.size() != r_)
      throw DimensionError("ConvLayer: built for " + std::to_string(r_) + " relations, got " +
                           std::to_string(relations.size()));
    if (x.cols() != in_)
      throw DimensionError("ConvLayer: expected " + std::to_string(in_) + " input features, got " +
                           std::to_string(x.cols()));
    switch (fusion_) {
      case FusionMethod::SingleEdge:
        return ad::concat_cols(cheb_blocks(relations[0], x, k_));
      case FusionMethod::Concat: {
        std::vector<Var> all;
        for (const auto& rel : relations)
          for (auto& b : cheb_blocks(rel, x, k_)) all.push_back(b);
        return ad::concat_cols(all);
      }
      case FusionMethod::TwoDCheb: {
        const auto inner = cheb_blocks(relations[1], x, k_);
        std::vector<Var> blocks(k_ * k_);
        for (std::size_t j = 0; j < k_; ++j) {
          const auto outer = cheb_blocks(relations[0], inner[j], k_);
          for (std::size_t i = 0; i < k_; ++i) blocks[i * k_ + j] = outer[i];
        }
        return ad::concat_cols(blocks);
      }
      default: break;
    }
    std::vector<Var> w, b;
    for (std::size_t p = 0; p < proj_w_.size(); ++p) {
      w.push_back(tape.param(proj_w_[p]));
      b.push_back(tape.param(proj_b_[p]));
    }
    std::optional<Var> acc;
    for (std::size_t r = 0; r < r_; ++r) {
      const std::size_t p = is_shared(fusion_) ? 0 : r;
      const Var basis = ad::concat_cols(cheb_blocks(relations[r], x, k_));
      const Var h = ad::tanh(ad::add_row(ad::matmul(basis, w[p]), b[p]));
      if (!acc)
        acc = h;
      else
        acc = is_multiplicative(fusion_) ? ad::elementwise_mul(*acc, h) : ad::add(*acc, h);
    }
    return *acc;
  }

  Var forward(Tape& tape, const std::vector<Relation>& relations, const Var& x) {
    const Var rep = fused(tape, relations, x);
    return ad::matmul(rep, tape.param(theta_));
  }

 private:
  FusionMethod fusion_;
  std::size_t in_, out_, k_, r_, c_;
  Parameter theta_;
  std::vector<Parameter> proj_w_;
  std::vector<Parameter> proj_b_;
};

/// Learned adjacency over a batch: raw holds the row softmax, values the symmetrized matrix.
struct LearnedEdges {
  PatternPtr pattern;
  Var raw;
  Var values;

  Var dense() const { return ad::pattern_to_dense(values, pattern); }
  Var raw_dense() const { return ad::pattern_to_dense(raw, pattern); }
};

/// Two-layer perceptron scoring node pairs from their concatenated features:
/// f_edge(x_i, x_j) = w2ᵀ relu(W [x_i; x_j] + b1). W is stored as its two row halves.
/// An output bias would cancel in the softmax, so there is none.
class EdgeLearner {
 public:
  EdgeLearner(std::size_t in_features, std::size_t hidden, Rng& rng, const std::string& prefix = "edge")
      : in_(in_features), hidden_(hidden) {
    if (in_features == 0 || hidden == 0) throw DimensionError("EdgeLearner: zero dimension");
    // Split of one Glorot-initialized (2·in × hidden) matrix.
    const DenseMat full = glorot(2 * in_, hidden_, rng);
    DenseMat top(in_, hidden_), bottom(in_, hidden_);
    for (std::size_t i = 0; i < in_; ++i)
      for (std::size_t c = 0; c < hidden_; ++c) {
        top(i, c) = full(i, c);
        bottom(i, c) = full(in_ + i, c);
      }
    w_src_ = Parameter(prefix + ".w_src", std::move(top));
    w_dst_ = Parameter(prefix + ".w_dst", std::move(bottom));
    b1_ = Parameter(prefix + ".b1", DenseMat(1, hidden_), false);
    w2_ = Parameter(prefix + ".w2", glorot(hidden_, 1, rng));
  }

  std::size_t in_features() const noexcept { return in_; }
  std::size_t hidden() const noexcept { return hidden_; }

  std::vector<Parameter*> parameters() { return {&w_src_, &w_dst_, &b1_, &w2_}; }

  /// Softmax over each node's own graph, then (E + Eᵀ)/2. Cross-graph entries are absent (zero).
  LearnedEdges learn(Tape& tape, const Var& x, const PatternPtr& pattern) {
    if (x.cols() != in_) throw DimensionError("EdgeLearner: feature width mismatch");
    if (x.rows() != pattern->n) throw DimensionError("EdgeLearner: pattern size mismatch");
    const Var src = ad::matmul(x, tape.param(w_src_));
    const Var dst = ad::matmul(x, tape.param(w_dst_));
    const Var hidden = ad::relu(ad::add_row(ad::pair_gather_add(src, dst, pattern), tape.param(b1_)));
    const Var scores = ad::matmul(hidden, tape.param(w2_));
    const Var raw = ad::pattern_softmax(scores, pattern);
    return LearnedEdges{pattern, raw, ad::pattern_symmetrize(raw, pattern)};
  }

  /// Convenience overload building the within-graph pattern from a segment vector.
  LearnedEdges learn(Tape& tape, const Var& x, const std::vector<std::size_t>& segments) {
    if (segments.empty()) throw DimensionError("EdgeLearner: empty graph segment");
    return learn(tape, x, PairPattern::within_segments(segments));
  }

 private:
  std::size_t in_, hidden_;
  Parameter w_src_, w_dst_, b1_, w2_;
};

/// Learned edges as a relation: symmetrized adjacency normalized like annotated edges.
inline Relation learned_relation(const LearnedEdges& e) {
  return Relation::learned(e.pattern, ad::pattern_rescaled_laplacian(e.values, e.pattern));
}

/// Per graph, per feature, the maximum over that graph's node rows.
inline Var global_max_pool(const Var& x, const std::vector<std::size_t>& segments, std::size_t n_graphs) {
  return ad::row_max_pool_segmented(x, segments, n_graphs);
}

/// Fully connected layer y = x W (+ b).
class Linear {
 public:
  Linear(std::size_t in, std::size_t out, bool bias, Rng& rng, const std::string& prefix)
      : w_(prefix + ".w", glorot(in, out, rng)), has_bias_(bias) {
    if (bias) b_ = Parameter(prefix + ".b", DenseMat(1, out), false);
  }

  std::size_t in_features() const { return w_.value.rows(); }
  std::size_t out_features() const { return w_.value.cols(); }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> ps{&w_};
    if (has_bias_) ps.push_back(&b_);
    return ps;
  }
  Parameter& weight() { return w_; }
  Parameter* bias() { return has_bias_ ? &b_ : nullptr; }

  Var forward(Tape& tape, const Var& x) {
    Var y = ad::matmul(x, tape.param(w_));
    return has_bias_ ? ad::add_row(y, tape.param(b_)) : y;
  }

 private:
  Parameter w_;
  Parameter b_;
  bool has_bias_;
};

}  // namespace mgcheb
