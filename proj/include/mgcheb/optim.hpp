#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "autodiff.hpp"
#include "error.hpp"

namespace mgcheb {

/// Step decay: lr(epoch) = base_lr · γ^(number of milestones ≤ epoch). Epochs are 0-based.
struct Schedule {
  double base_lr = 0.001;
  double gamma = 0.1;
  std::vector<std::size_t> milestones{25, 35, 45};

  double lr(std::size_t epoch) const {
    double v = base_lr;
    for (auto m : milestones)
      if (epoch >= m) v *= gamma;
    return v;
  }
};

/// Bias-corrected Adam with weight decay applied as an extra lr·wd·θ shrinkage per step.
/// Parameters with `decay == false` (biases, normalization scale/shift) are not decayed.
class Adam {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;

  Adam() = default;
  explicit Adam(double wd) : weight_decay(wd) {}

  std::size_t steps() const noexcept { return t_; }

  /// Throws if any gradient is non-finite; no parameter is modified in that case.
  void step(const std::vector<Parameter*>& params, double lr) {
    for (const auto* p : params)
      if (!p->grad.all_finite()) throw Error("Adam: non-finite gradient in parameter '" + p->name + "'");
    if (m_.size() != params.size()) {
      m_.clear();
      v_.clear();
      for (const auto* p : params) {
        m_.emplace_back(p->value.rows(), p->value.cols());
        v_.emplace_back(p->value.rows(), p->value.cols());
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Parameter& p = *params[k];
      if (!m_[k].same_shape(p.value)) throw DimensionError("Adam: parameter '" + p.name + "' changed shape");
      const double wd = p.decay ? weight_decay : 0.0;
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        m_[k][i] = beta1 * m_[k][i] + (1.0 - beta1) * g;
        v_[k][i] = beta2 * v_[k][i] + (1.0 - beta2) * g * g;
        const double mhat = m_[k][i] / c1;
        const double vhat = v_[k][i] / c2;
        p.value[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p.value[i]);
      }
    }
  }

 private:
  std::size_t t_ = 0;
  std::vector<DenseMat> m_, v_;
};

}  // namespace mgcheb
