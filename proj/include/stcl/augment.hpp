#pragma once

#include "stcl/rng.hpp"
#include "stcl/tensor.hpp"

namespace stcl {

// Stochastic view generation: scale, shift, jitter, applied in that order,
// each activating independently with probability p_apply. Scale multiplies
// the whole window by one N(0, sigma) draw, shift adds one draw to every
// entry, jitter adds i.i.d. draws per entry.
struct AugmentConfig {
  double sigma_scale = 0.5;
  double sigma_shift = 0.5;
  double sigma_jitter = 0.5;
  double p_apply = 0.5;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (sigma_scale < 0 || sigma_shift < 0 || sigma_jitter < 0) {
      throw config_error("augment: sigmas must be >= 0");
    }
    if (p_apply < 0.0 || p_apply > 1.0) {
      throw config_error("augment: p_apply must be in [0, 1]");
    }
  }
};

inline Tensor augment(const Tensor& x, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  Tensor out = x.detach();
  auto vals = out.mutable_data();

  if (rng.uniform() < cfg.p_apply) {
    const double eps = rng.normal(0.0, cfg.sigma_scale);
    for (double& v : vals) v *= eps;
  }
  if (rng.uniform() < cfg.p_apply) {
    const double eps = rng.normal(0.0, cfg.sigma_shift);
    for (double& v : vals) v += eps;
  }
  if (rng.uniform() < cfg.p_apply) {
    for (double& v : vals) v += rng.normal(0.0, cfg.sigma_jitter);
  }
  return out;
}

}  // namespace stcl
