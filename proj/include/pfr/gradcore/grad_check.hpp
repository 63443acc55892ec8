// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "pfr/gradcore/tensor.hpp"

namespace pfr {

/// Largest |analytic - central difference| / max(1, |analytic|) over every
/// coordinate of `inputs`. `f` must rebuild its graph from the current
/// input values on each call.
inline double grad_check(const std::function<Tensor()>& f, std::span<Tensor> inputs, double eps = 1e-6) {
  for (auto& x : inputs) x.clear_grad();
  backward(f());
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& x : inputs) {
    analytic.emplace_back(x.has_grad() ? std::vector<double>(x.grad().begin(), x.grad().end())
                                       : std::vector<double>(x.numel(), 0.0));
    x.clear_grad();
  }
  double worst = 0.0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto v = inputs[t].mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + eps;
      const double up = f().item();
      v[i] = saved - eps;
      const double down = f().item();
      v[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[t][i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

}  // namespace pfr
