#pragma once

#include <cmath>
#include <vector>

#include "stcl/tensor.hpp"

namespace stcl {

// SGD with classic (coupled) L2 weight decay and a cosine-annealed learning
// rate that decays to zero at total_steps, no restarts, no warmup.
struct OptimState {
  std::vector<std::vector<double>> velocity;  // parallel to the param list
  double base_lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t total_steps = 0;
  std::size_t step = 0;
};

inline double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps) {
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * frac));
}

inline OptimState make_optim(const std::vector<Tensor*>& params, double base_lr,
                             double momentum, double weight_decay,
                             std::size_t total_steps) {
  if (momentum < 0.0 || momentum >= 1.0) {
    throw config_error("optimizer: momentum must be in [0, 1)");
  }
  if (total_steps < 1) throw config_error("optimizer: total_steps must be >= 1");
  OptimState st;
  st.base_lr = base_lr;
  st.momentum = momentum;
  st.weight_decay = weight_decay;
  st.total_steps = total_steps;
  st.velocity.reserve(params.size());
  for (const Tensor* p : params) st.velocity.emplace_back(p->numel(), 0.0);
  return st;
}

// v <- momentum*v + grad + weight_decay*param; param <- param - lr(step)*v.
// Parameters with no accumulated gradient are treated as zero-grad.
inline void sgd_step(const std::vector<Tensor*>& params, OptimState& st) {
  if (st.step >= st.total_steps) {
    throw config_error("sgd_step: schedule exhausted (step " +
                       std::to_string(st.step) + " of " +
                       std::to_string(st.total_steps) + ")");
  }
  if (params.size() != st.velocity.size()) {
    throw dim_error("sgd_step: parameter count changed under the optimizer");
  }
  const double lr = cosine_lr(st.base_lr, st.step, st.total_steps);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = *params[p];
    auto vals = t.mutable_data();
    std::vector<double>& vel = st.velocity[p];
    if (vel.size() != vals.size()) {
      throw dim_error("sgd_step: velocity shape mismatch for parameter " +
                      std::to_string(p));
    }
    auto g = t.grad();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double gi = (i < g.size() ? g[i] : 0.0) + st.weight_decay * vals[i];
      vel[i] = st.momentum * vel[i] + gi;
      vals[i] -= lr * vel[i];
    }
  }
  ++st.step;
}

inline void zero_grads(const std::vector<Tensor*>& params) {
  for (Tensor* p : params) p->zero_grad();
}

}  // namespace stcl
