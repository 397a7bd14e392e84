#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "gama/tensor.hpp"

namespace gama {

using ScalarFn = std::function<Tensor<double>(const Tensor<double>&)>;

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
inline double finite_diff_check(const ScalarFn& fn, const Tensor<double>& point, double h = 1e-4) {
  auto x = point.clone();
  x.set_requires_grad(true);
  auto loss = fn(x);
  if (loss.numel() != 1) throw Error("finite_diff_check: function must be scalar-valued");
  std::vector<double> analytic(static_cast<std::size_t>(x.numel()), 0.0);
  if (loss.requires_grad()) {
    backward(loss);
    if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
  }

  NoGradGuard no_grad;
  double worst = 0.0;
  auto probe = point.clone();
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double up = fn(probe).item();
    probe.data()[i] = orig - h;
    const double down = fn(probe).item();
    probe.data()[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
  }
  return worst;
}

}  // namespace gama
