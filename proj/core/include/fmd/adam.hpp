#pragma once

#include <span>
#include <vector>

namespace fmd {

struct TrainConfig {
  int epochs = 50;
  double lr = 2e-3;
  int batch = 32;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double adam_eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;  // first moment
  std::vector<double> v;  // second moment
  long step = 0;

  explicit AdamState(size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update, in place. Lengths of params/grads must
/// match the state.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               const TrainConfig& cfg);

}  // namespace fmd
