#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "autodiff.hpp"
#include "rng.hpp"

namespace mgcheb {

struct GradCheckOptions {
  double eps = 1e-5;
  std::size_t samples_per_param = 0;  // 0 checks every coordinate
  std::uint64_t seed = 0;
  // Denominator floor. Raise it when some gradients are structurally zero and the central
  // difference only sees rounding noise.
  double floor = 1e-8;
};

/// Relative error between a tape gradient and a central difference, with a floor on the
/// denominator.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  return std::abs(analytic - numeric) / std::max(floor, std::abs(analytic) + std::abs(numeric));
}

/// Compares backward() against central finite differences. `loss_fn` must build a scalar loss
/// on the given tape from the current parameter values and be deterministic. Returns the
/// maximum relative error over the checked coordinates.
inline double grad_check(const std::function<Var(Tape&)>& loss_fn, const std::vector<Parameter*>& params,
                         const GradCheckOptions& opt = {}) {
  for (auto* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
  }
  auto eval = [&] {
    Tape tape;
    return loss_fn(tape).value()[0];
  };

  Rng rng(opt.seed);
  double worst = 0.0;
  for (auto* p : params) {
    std::vector<std::size_t> coords(p->value.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (opt.samples_per_param > 0 && opt.samples_per_param < coords.size()) {
      rng.shuffle(coords);
      coords.resize(opt.samples_per_param);
    }
    for (std::size_t k : coords) {
      const double saved = p->value[k];
      p->value[k] = saved + opt.eps;
      const double up = eval();
      p->value[k] = saved - opt.eps;
      const double down = eval();
      p->value[k] = saved;
      const double numeric = (up - down) / (2.0 * opt.eps);
      worst = std::max(worst, relative_error(p->grad[k], numeric, opt.floor));
    }
  }
  return worst;
}

}  // namespace mgcheb
