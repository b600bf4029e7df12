#pragma once

// Central-difference gradient checking in 64-bit.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mvclip/tensor.hpp"

namespace mvclip {

using ScalarFn = std::function<Tensor<double>(const Tensor<double>&)>;

// Max over coordinates of |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
// `coords` limits the check to the given flat indices (all when empty).
inline double grad_check(const ScalarFn& f, const Tensor<double>& input, double step = 1e-5,
                         const std::vector<std::size_t>& coords = {}) {
  Tensor<double> x = input.detach();
  x.set_requires_grad(true);
  const auto loss = f(x);
  if (loss.numel() != 1) throw ShapeError("grad_check: function must be scalar-valued");
  const double again = f(x.detach()).item();
  if (again != loss.item()) throw Error("grad_check: function is not deterministic");
  backward(loss);
  const std::vector<double> analytic(x.grad().begin(), x.grad().end());

  std::vector<std::size_t> idx = coords;
  if (idx.empty()) {
    idx.resize(x.numel());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  }
  Tensor<double> probe = x.detach();
  double worst = 0.0;
  for (std::size_t i : idx) {
    const double saved = probe.storage()[i];
    probe.storage()[i] = saved + step;
    const double up = f(probe).item();
    probe.storage()[i] = saved - step;
    const double down = f(probe).item();
    probe.storage()[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double err = std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + std::abs(numeric) + 1e-12);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace mvclip
