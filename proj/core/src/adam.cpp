#include "fmd/adam.hpp"

#include <cmath>

#include "fmd/error.hpp"

namespace fmd {

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               const TrainConfig& cfg) {
  require(params.size() == grads.size(), "invalid_argument",
          "adam_step: params/grads length mismatch");
  if (state.m.empty() && !params.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  require(state.m.size() == params.size(), "invalid_argument",
          "adam_step: optimizer state length mismatch");
  require(cfg.lr > 0.0, "invalid_config", "adam_step: lr must be positive");
  require(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0,
          "invalid_config", "adam_step: betas must lie in [0,1)");

  state.step += 1;
  double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    double mhat = state.m[i] / c1;
    double vhat = state.v[i] / c2;
    params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
  }
}

}  // namespace fmd
