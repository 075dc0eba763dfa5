#pragma once

#include <cstdint>
#include <vector>

#include "fmd/classifier.hpp"
#include "fmd/fmd_prior.hpp"

namespace fmd {

struct GuidanceConfig {
  double scale = 50.0;     // s; 0 disables guidance
  int delta_t = -1;        // initial diffusion step; -1 means T/2
  int target = 0;          // desired class
  uint64_t rng_seed = 0;   // seeds the forward-noising eps
  bool per_step = false;   // recompute the denoised estimate and guide every
                           // step instead of once per fraction
};

struct FractionTrace {
  int fraction = 0;
  int entry_step = 0;
  double posterior_target = 0.0;  // p(target | denoised estimate) at fraction entry
  double gamma = 0.0;             // guidance coefficient applied at the fraction's final step
  long calls_after = 0;           // cumulative denoiser calls when the fraction finished
};

struct CounterfactualResult {
  Sample original;
  Sample counterfactual;
  int target = 0;
  Matrix diff;  // counterfactual - original, exactly
  long denoiser_calls = 0;
  bool flipped = false;
  double posterior_target_final = 0.0;
  std::vector<FractionTrace> trace;
};

/// gamma * grad with gamma = s * (sigma_t^2/alpha_t^2) * (alpha_{t-k} - alpha_t * sigma_{t-k}/sigma_t).
Matrix guidance_term(const Matrix& grad, int t, int k, double s, const NoiseSchedule& sched);

/// The scalar coefficient gamma above.
double guidance_gamma(int t, int k, double s, const NoiseSchedule& sched);

/// Classifier-guided counterfactual generation.
///
/// Forward-noises the input to delta_t with a seeded draw, then walks the
/// fractions from f_c = ceil(delta_t*F/T) down to 1. At each fraction entry a
/// full unguided rollout to t=0 produces the denoised estimate whose
/// classifier gradient is the guidance direction; reverse steps then sweep
/// the fraction, with the guidance term added on the fraction's final step.
/// With scale == 0 the output equals unguided regeneration bitwise.
///
/// Errors: the classifier must not already predict the target class
/// ("already_target"), and delta_t must lie on the stride grid.
CounterfactualResult generate(const FmdPrior& prior, const Classifier& clf, const Sample& x0,
                              const GuidanceConfig& cfg);

/// Rollout from t = T on pure seeded noise.
Sample unconditional_sample(const FmdPrior& prior, int rows, int cols, uint64_t seed);

}  // namespace fmd
