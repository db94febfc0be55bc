#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "dense.hpp"
#include "error.hpp"
#include "rng.hpp"
#include "sparse.hpp"

namespace mgcheb {

/// A trainable weight array with its accumulated gradient. Lives outside any tape so the
/// same parameter can be bound into many tapes (one per forward pass or per worker).
struct Parameter {
  std::string name;
  DenseMat value;
  DenseMat grad;
  bool decay = true;  // subject to weight decay

  Parameter() = default;
  Parameter(std::string n, DenseMat v, bool d = true)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()), decay(d) {}

  void zero_grad() {
    if (!grad.same_shape(value)) grad = DenseMat(value.rows(), value.cols());
    grad.fill(0.0);
  }
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const DenseMat& value() const;
  DenseMat grad() const;
  bool requires_grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records primitive applications in execution order; backward() replays them in reverse.
/// Single-threaded; use one Tape per worker.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Var constant(DenseMat v) { return push(std::move(v), false, nullptr); }
  Var leaf(DenseMat v) { return push(std::move(v), true, nullptr); }

  /// Binds a parameter as a leaf; its node gradient is added into p.grad by backward().
  Var param(Parameter& p) {
    Var v = push(p.value, true, nullptr);
    nodes_[v.id()].param = &p;
    return v;
  }

  /// Records a primitive output. The closure reads grad(self) and accumulates into inputs.
  Var record(DenseMat value, bool requires_grad, Backward bw) {
    return push(std::move(value), requires_grad, requires_grad ? std::move(bw) : nullptr);
  }

  const DenseMat& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer, allocated as zeros on first access.
  DenseMat& grad(std::size_t id) {
    auto& n = nodes_[id];
    if (!n.has_grad) {
      n.grad = DenseMat(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
    return n.grad;
  }
  bool has_grad(std::size_t id) const { return nodes_[id].has_grad; }

  void accumulate(std::size_t id, const DenseMat& g) {
    if (nodes_[id].requires_grad) grad(id) += g;
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  void backward(const Var& loss) {
    if (loss.rows() != 1 || loss.cols() != 1)
      throw DimensionError("backward: loss must be 1x1, got " + loss.value().shape_str());
    grad(loss.id()).fill(1.0);
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      auto& n = nodes_[id];
      if (!n.has_grad || !n.requires_grad) continue;
      if (n.backward) n.backward(*this, id);
      if (n.param) {
        if (!n.param->grad.same_shape(n.param->value)) n.param->zero_grad();
        n.param->grad += n.grad;
      }
    }
  }

 private:
  struct Node {
    DenseMat value;
    DenseMat grad;
    bool has_grad = false;
    bool requires_grad = false;
    Backward backward;
    Parameter* param = nullptr;
  };

  Var push(DenseMat v, bool rg, Backward bw) {
    nodes_.push_back(Node{std::move(v), {}, false, rg, std::move(bw), nullptr});
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

inline const DenseMat& Var::value() const { return tape_->value(id_); }
inline DenseMat Var::grad() const {
  if (tape_->has_grad(id_)) return tape_->grad(id_);
  return DenseMat(value().rows(), value().cols());
}
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

namespace ad {

inline void same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw Error("operands recorded on different tapes");
}

inline Var matmul(const Var& a, const Var& b) {
  same_tape(a, b);
  Tape& t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  DenseMat out = mgcheb::matmul(a.value(), b.value());
  return t.record(std::move(out), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& t, std::size_t self) {
    const DenseMat& g = t.grad(self);
    if (t.requires_grad(ia)) gemm_nt_acc(g, t.value(ib), t.grad(ia));
    if (t.requires_grad(ib)) gemm_tn_acc(t.value(ia), g, t.grad(ib));
  });
}

inline Var add(const Var& a, const Var& b) {
  same_tape(a, b);
  a.value().require_same_shape(b.value(), "add");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.value() + b.value(), a.requires_grad() || b.requires_grad(),
                         [ia, ib](Tape& t, std::size_t self) {
                           const DenseMat g = t.grad(self);
                           t.accumulate(ia, g);
                           t.accumulate(ib, g);
                         });
}

inline Var sub(const Var& a, const Var& b) {
  same_tape(a, b);
  a.value().require_same_shape(b.value(), "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.value() - b.value(), a.requires_grad() || b.requires_grad(),
                         [ia, ib](Tape& t, std::size_t self) {
                           const DenseMat g = t.grad(self);
                           t.accumulate(ia, g);
                           t.accumulate(ib, g * -1.0);
                         });
}

inline Var elementwise_mul(const Var& a, const Var& b) {
  same_tape(a, b);
  a.value().require_same_shape(b.value(), "elementwise_mul");
  DenseMat out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= b.value()[k];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& t, std::size_t self) {
    const DenseMat g = t.grad(self);
    if (t.requires_grad(ia)) {
      DenseMat ga = g;
      for (std::size_t k = 0; k < ga.size(); ++k) ga[k] *= t.value(ib)[k];
      t.grad(ia) += ga;
    }
    if (t.requires_grad(ib)) {
      DenseMat gb = g;
      for (std::size_t k = 0; k < gb.size(); ++k) gb[k] *= t.value(ia)[k];
      t.grad(ib) += gb;
    }
  });
}

inline Var scalar_mul(const Var& a, double s) {
  const std::size_t ia = a.id();
  return a.tape().record(a.value() * s, a.requires_grad(),
                         [ia, s](Tape& t, std::size_t self) { t.accumulate(ia, t.grad(self) * s); });
}

/// x + 1ᵀ·bias, bias is 1 × cols.
inline Var add_row(const Var& x, const Var& bias) {
  same_tape(x, bias);
  if (bias.rows() != 1 || bias.cols() != x.cols())
    throw DimensionError("add_row: bias " + bias.value().shape_str() + " for " + x.value().shape_str());
  DenseMat out = x.value();
  const std::size_t f = out.cols();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t c = 0; c < f; ++c) out(i, c) += bias.value()[c];
  const std::size_t ix = x.id(), ib = bias.id();
  return x.tape().record(std::move(out), x.requires_grad() || bias.requires_grad(),
                         [ix, ib](Tape& t, std::size_t self) {
                           const DenseMat& g = t.grad(self);
                           if (t.requires_grad(ix)) t.grad(ix) += g;
                           if (t.requires_grad(ib)) {
                             DenseMat& gb = t.grad(ib);
                             for (std::size_t i = 0; i < g.rows(); ++i)
                               for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(i, c);
                           }
                         });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Tape& t = parts.front().tape();
  const std::size_t n = parts.front().rows();
  std::size_t cols = 0;
  bool rg = false;
  std::vector<std::size_t> ids, offsets;
  for (const auto& p : parts) {
    same_tape(parts.front(), p);
    if (p.rows() != n) throw DimensionError("concat_cols: row mismatch");
    ids.push_back(p.id());
    offsets.push_back(cols);
    cols += p.cols();
    rg = rg || p.requires_grad();
  }
  DenseMat out(n, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const DenseMat& v = parts[k].value();
    for (std::size_t i = 0; i < n; ++i)
      std::copy(v.row(i).begin(), v.row(i).end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(offsets[k]));
  }
  return t.record(std::move(out), rg, [ids, offsets](Tape& t, std::size_t self) {
    const DenseMat& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      DenseMat& gi = t.grad(ids[k]);
      for (std::size_t i = 0; i < gi.rows(); ++i)
        for (std::size_t c = 0; c < gi.cols(); ++c) gi(i, c) += g(i, offsets[k] + c);
    }
  });
}

inline Var slice_cols(const Var& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.cols()) throw DimensionError("slice_cols: range exceeds " + a.value().shape_str());
  DenseMat out(a.rows(), count);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t c = 0; c < count; ++c) out(i, c) = a.value()(i, begin + c);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia, begin](Tape& t, std::size_t self) {
    const DenseMat& g = t.grad(self);
    DenseMat& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(i, begin + c) += g(i, c);
  });
}

inline Var tanh(const Var& a) {
  DenseMat out = a.value();
  for (auto& v : out.data()) v = std::tanh(v);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    const DenseMat& y = t.value(self);
    DenseMat g = t.grad(self);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] *= 1.0 - y[k] * y[k];
    t.grad(ia) += g;
  });
}

inline Var relu(const Var& a) {
  DenseMat out = a.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    DenseMat g = t.grad(self);
    const DenseMat& x = t.value(ia);
    for (std::size_t k = 0; k < g.size(); ++k)
      if (!(x[k] > 0.0)) g[k] = 0.0;
    t.grad(ia) += g;
  });
}

/// Row-wise softmax restricted to entries where mask is nonzero; masked entries are exactly 0.
inline Var softmax_rows_masked(const Var& a, const DenseMat& mask) {
  a.value().require_same_shape(mask, "softmax_rows_masked");
  const DenseMat& x = a.value();
  DenseMat out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < x.cols(); ++j)
      if (mask(i, j) != 0.0) mx = std::max(mx, x(i, j));
    if (mx == -std::numeric_limits<double>::infinity())
      throw DimensionError("softmax_rows_masked: row " + std::to_string(i) + " has no unmasked entries");
    double s = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j)
      if (mask(i, j) != 0.0) s += (out(i, j) = std::exp(x(i, j) - mx));
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) /= s;
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    const DenseMat& y = t.value(self);
    const DenseMat& g = t.grad(self);
    DenseMat& ga = t.grad(ia);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

/// Per-segment, per-column maximum over rows. Ties route the gradient to the lowest row index.
inline Var row_max_pool_segmented(const Var& a, const std::vector<std::size_t>& segments, std::size_t n_segments) {
  const DenseMat& x = a.value();
  if (segments.size() != x.rows()) throw DimensionError("row_max_pool_segmented: segment vector length");
  const std::size_t f = x.cols();
  DenseMat out(n_segments, f);
  std::vector<std::size_t> arg(n_segments * f, std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const std::size_t s = segments[i];
    if (s >= n_segments) throw DimensionError("row_max_pool_segmented: segment id out of range");
    for (std::size_t c = 0; c < f; ++c) {
      std::size_t& best = arg[s * f + c];
      if (best == std::numeric_limits<std::size_t>::max() || x(i, c) > x(best, c)) best = i;
    }
  }
  for (std::size_t s = 0; s < n_segments; ++s)
    for (std::size_t c = 0; c < f; ++c) {
      const std::size_t r = arg[s * f + c];
      if (r == std::numeric_limits<std::size_t>::max())
        throw DimensionError("row_max_pool_segmented: segment " + std::to_string(s) + " is empty");
      out(s, c) = x(r, c);
    }
  if (f == 0)
    for (std::size_t s = 0; s < n_segments; ++s)
      if (std::find(segments.begin(), segments.end(), s) == segments.end())
        throw DimensionError("row_max_pool_segmented: segment " + std::to_string(s) + " is empty");
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia, arg, f](Tape& t, std::size_t self) {
    const DenseMat& g = t.grad(self);
    DenseMat& ga = t.grad(ia);
    for (std::size_t k = 0; k < arg.size(); ++k) ga(arg[k], k % f) += g[k];
  });
}

/// Running statistics for batch_norm, updated in training mode.
struct BatchNormState {
  DenseMat running_mean;
  DenseMat running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNormState() = default;
  explicit BatchNormState(std::size_t features)
      : running_mean(1, features, 0.0), running_var(1, features, 1.0) {}
};

/// Normalizes each column over all rows. Training mode uses batch statistics and updates the
/// running averages; evaluation mode uses the running averages only, so rows are independent.
inline Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, bool train) {
  same_tape(x, gamma);
  same_tape(x, beta);
  const DenseMat& xv = x.value();
  const std::size_t n = xv.rows(), f = xv.cols();
  if (gamma.rows() != 1 || gamma.cols() != f || beta.rows() != 1 || beta.cols() != f ||
      state.running_mean.cols() != f)
    throw DimensionError("batch_norm: parameter width does not match " + xv.shape_str());
  if (train && n == 0) throw DimensionError("batch_norm: empty batch");

  DenseMat mean(1, f), inv_std(1, f);
  if (train) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < f; ++c) mean[c] += xv(i, c);
    for (std::size_t c = 0; c < f; ++c) mean[c] /= static_cast<double>(n);
    DenseMat var(1, f);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < f; ++c) {
        const double d = xv(i, c) - mean[c];
        var[c] += d * d;
      }
    for (std::size_t c = 0; c < f; ++c) {
      const double biased = var[c] / static_cast<double>(n);
      inv_std[c] = 1.0 / std::sqrt(biased + state.eps);
      const double unbiased = n > 1 ? var[c] / static_cast<double>(n - 1) : biased;
      state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean[c];
      state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < f; ++c) {
      mean[c] = state.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + state.eps);
    }
  }

  DenseMat xhat(n, f), out(n, f);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < f; ++c) {
      xhat(i, c) = (xv(i, c) - mean[c]) * inv_std[c];
      out(i, c) = gamma.value()[c] * xhat(i, c) + beta.value()[c];
    }

  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  const bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  return x.tape().record(std::move(out), rg, [ix, ig, ib, xhat, inv_std, train](Tape& t, std::size_t self) {
    const DenseMat& g = t.grad(self);
    const std::size_t n = g.rows(), f = g.cols();
    DenseMat sum_g(1, f), sum_gx(1, f);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < f; ++c) {
        sum_g[c] += g(i, c);
        sum_gx[c] += g(i, c) * xhat(i, c);
      }
    if (t.requires_grad(ig)) t.grad(ig) += sum_gx;
    if (t.requires_grad(ib)) t.grad(ib) += sum_g;
    if (!t.requires_grad(ix)) return;
    const DenseMat& gamma = t.value(ig);
    DenseMat& gx = t.grad(ix);
    const double nn = static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < f; ++c) {
        const double scale = gamma[c] * inv_std[c];
        if (train)
          gx(i, c) += scale * (g(i, c) - sum_g[c] / nn - xhat(i, c) * sum_gx[c] / nn);
        else
          gx(i, c) += scale * g(i, c);
      }
  });
}

/// Inverted dropout: zeroes entries with probability p and scales survivors by 1/(1-p) in
/// training mode; identity otherwise.
inline Var dropout(const Var& x, double p, Rng& rng, bool train) {
  if (!(p >= 0.0 && p < 1.0)) throw Error("dropout: p must be in [0, 1)");
  if (!train || p == 0.0) return x;
  DenseMat mask(x.rows(), x.cols());
  const double keep = 1.0 / (1.0 - p);
  for (auto& m : mask.data()) m = rng.uniform() < p ? 0.0 : keep;
  DenseMat out = x.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= mask[k];
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), x.requires_grad(), [ix, mask](Tape& t, std::size_t self) {
    DenseMat g = t.grad(self);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] *= mask[k];
    t.grad(ix) += g;
  });
}

/// Mean over rows of -log softmax(logits)[target]. Returns 1 × 1.
inline Var cross_entropy_with_logits(const Var& logits, const std::vector<std::size_t>& targets) {
  const DenseMat& z = logits.value();
  if (targets.size() != z.rows() || z.rows() == 0)
    throw DimensionError("cross_entropy_with_logits: target count does not match rows");
  const std::size_t c = z.cols();
  DenseMat prob(z.rows(), c);
  double loss = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    if (targets[i] >= c) throw DimensionError("cross_entropy_with_logits: target class out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, z(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (prob(i, j) = std::exp(z(i, j) - mx));
    for (std::size_t j = 0; j < c; ++j) prob(i, j) /= s;
    loss += (mx + std::log(s)) - z(i, targets[i]);
  }
  const double inv_n = 1.0 / static_cast<double>(z.rows());
  const std::size_t il = logits.id();
  return logits.tape().record(DenseMat(1, 1, loss * inv_n), logits.requires_grad(),
                              [il, prob, targets, inv_n](Tape& t, std::size_t self) {
                                const double g = t.grad(self)[0];
                                DenseMat d = prob;
                                for (std::size_t i = 0; i < d.rows(); ++i) d(i, targets[i]) -= 1.0;
                                t.grad(il) += d * (g * inv_n);
                              });
}

inline Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record(DenseMat(1, 1, s), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (auto& v : t.grad(ia).data()) v += g;
  });
}

inline Var mean(const Var& a) {
  if (a.value().empty()) throw DimensionError("mean: empty input");
  return scalar_mul(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

/// Constant sparse matrix times a Var. The matrix is symmetric, so the adjoint reuses it.
/// `s` is held by reference and must outlive the tape's backward pass.
inline Var spmm(const SparseSym& s, const Var& x) {
  DenseMat out = mgcheb::spmm(s, x.value());
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), x.requires_grad(),
                         [&s, ix](Tape& t, std::size_t self) { spmm_acc(s, t.grad(self), t.grad(ix)); });
}

/// Fused Chebyshev step 2·S·a - b.
inline Var cheb_step(const SparseSym& s, const Var& a, const Var& b) {
  same_tape(a, b);
  DenseMat out = b.value() * -1.0;
  spmm_acc(s, a.value(), out, 2.0);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), a.requires_grad() || b.requires_grad(),
                         [&s, ia, ib](Tape& t, std::size_t self) {
                           const DenseMat g = t.grad(self);
                           if (t.requires_grad(ia)) spmm_acc(s, g, t.grad(ia), 2.0);
                           t.accumulate(ib, g * -1.0);
                         });
}

}  // namespace ad
}  // namespace mgcheb
