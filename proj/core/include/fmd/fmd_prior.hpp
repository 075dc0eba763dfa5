#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fmd/adam.hpp"
#include "fmd/denoiser.hpp"
#include "fmd/schedule.hpp"

namespace fmd {

/// Fractional multi-phase-distilled diffusion prior: one denoiser per
/// fraction, a shared schedule, and the current distillation phase.
/// step_size() = 2^phase is the reverse-sampling stride; it always divides
/// the fraction length T/F.
struct FmdPrior {
  NoiseSchedule sched;
  FractionLayout layout;
  std::vector<DenoiserNet> nets;  // nets[f-1] serves steps [end_of(f), start_of(f)]
  int phase = 0;

  int step_size() const { return 1 << phase; }
};

/// Throws Error("invalid_argument") naming the violated invariant.
void validate_prior(const FmdPrior& prior);

/// Denoiser callback used by rollout_with: (fraction f, x_t, t) -> x0_hat.
using FractionDenoiser = std::function<Matrix(int, const Matrix&, int)>;

/// Reverse pass from t_start down to 0 with stride k, routing each step
/// through the fraction of its source step. t_start must be a multiple of k
/// ("on the step grid"). If `calls` is given it receives the number of
/// denoiser invocations (= t_start / k).
Matrix rollout_with(const NoiseSchedule& sched, const FractionLayout& layout, int k,
                    const FractionDenoiser& denoise_at, Matrix x, int t_start,
                    long* calls = nullptr);

/// rollout_with bound to the prior's nets and stride.
Matrix rollout(const FmdPrior& prior, const Matrix& x_t, int t_start, long* calls = nullptr);

/// Train one denoiser per fraction on the denoising objective
///   E_{x0, t ~ U[end_of(f), start_of(f)], eps} || D^[f](x_t) - x0 ||^2 / (R L)
/// with x_t = forward_diffuse(x0, t, eps). Returns a phase-0 prior.
/// Deterministic for a fixed seed; fractions train on independent RNG
/// streams, so jobs > 1 changes nothing but wall time.
FmdPrior train_fractions(std::span<const Sample> data, const TrainConfig& cfg,
                         const NoiseSchedule& sched, const FractionLayout& layout,
                         const DenoiserConfig& dcfg, uint64_t seed, int jobs = 1);

struct DistillResult {
  FmdPrior prior;
  long skipped_degenerate = 0;  // batch items dropped for a near-zero target denominator
};

/// One distillation phase: per fraction, a student initialized from the
/// teacher learns to match two teacher steps in one step of twice the
/// stride. Returns a prior with phase+1.
DistillResult distill_phase(const FmdPrior& prior, std::span<const Sample> data,
                            const TrainConfig& cfg, uint64_t seed, int jobs = 1);

/// Whole-process ablation: jump directly from the current phase to
/// target_phase in a single student-teacher pass (the teacher chains
/// 2^(target_phase - phase) of its own steps per target).
DistillResult distill_to_phase(const FmdPrior& prior, std::span<const Sample> data,
                               const TrainConfig& cfg, int target_phase, uint64_t seed,
                               int jobs = 1);

}  // namespace fmd
