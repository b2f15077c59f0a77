#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "stcl/tensor.hpp"

namespace stcl {

// Compares reverse-mode gradients against central finite differences.
// f must be a pure scalar function of the given inputs: it is re-evaluated
// with individual elements perturbed in place, so any randomness inside f
// has to be frozen by the caller. Returns the max relative error with
// denominator max(|analytic|, |numeric|, 1e-8).
inline double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                         std::vector<Tensor>& inputs, double h = 1e-5) {
  for (Tensor& t : inputs) t.zero_grad();
  Tensor loss = f(inputs);
  if (!std::isfinite(loss.item())) {
    throw numeric_error("grad_check: non-finite loss value");
  }
  loss.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (Tensor& t : inputs) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.numel(), 0.0);
    }
  }

  double max_rel = 0.0;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    if (!inputs[p].requires_grad()) continue;
    auto vals = inputs[p].mutable_data();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double fp = f(inputs).item();
      vals[i] = orig - h;
      const double fm = f(inputs).item();
      vals[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw numeric_error("grad_check: non-finite loss under perturbation");
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[p][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
    }
  }
  return max_rel;
}

}  // namespace stcl
