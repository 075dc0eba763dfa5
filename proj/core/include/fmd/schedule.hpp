#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fmd/matrix.hpp"

namespace fmd {

/// A multivariate time series: R regions over L timepoints, with an
/// optional class label and an opaque identifier.
struct Sample {
  Matrix values;
  std::optional<int> label;
  std::string id;
};

enum class ScheduleKind { Cosine, LinearLambda };

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

/// Variance-preserving noise schedule tables for t in [0, T].
///
/// Invariants (validated on construction):
///   alpha[t]^2 + sigma[t]^2 == 1 within 1e-12,
///   alpha[0] == 1 and sigma[0] == 0 exactly,
///   alpha strictly decreasing, sigma strictly increasing,
///   lambda[t] = log(alpha^2/sigma^2) clamped to [-20, 20] and
///   non-increasing (strictly decreasing away from the clamp).
///
/// t = 0 is clean data; tables hold T+1 entries so a stride-k reverse step
/// may legally land on t = 0.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> alpha;
  std::vector<double> sigma;
  std::vector<double> lambda;
  ScheduleKind kind = ScheduleKind::Cosine;
};

constexpr double kLambdaClamp = 20.0;

/// Build a schedule of the given family. Deterministic for fixed (T, kind).
/// Throws Error("invalid_argument") for T < 2.
NoiseSchedule build_schedule(int T, ScheduleKind kind);
NoiseSchedule build_schedule(int T, const std::string& kind);

/// Throws Error("invalid_argument") naming the violated invariant.
void validate_schedule(const NoiseSchedule& s);

/// x_t = alpha_t * x0 + sigma_t * eps.
Matrix forward_diffuse(const Matrix& x0, int t, const Matrix& eps, const NoiseSchedule& s);

/// Deterministic reverse step of stride k:
///   x_{t-k} = alpha_{t-k} * x0_hat + sigma_{t-k} * (x_t - alpha_t * x0_hat) / sigma_t.
/// Requires k >= 1, t - k >= 0 and sigma_t > 0 (so t >= 1).
Matrix ddim_step(const Matrix& x_t, const Matrix& x0_hat, int t, int k, const NoiseSchedule& s);

/// Standard deviation of the stochastic reverse transition,
///   beta_t = sigma_{t-1} / (sigma_t * alpha_{t-1}) * sqrt(alpha_{t-1}^2 - alpha_t^2).
/// Generation always uses beta_t = 0; this exists for the stochastic-sampling
/// test oracle. Requires 1 <= t <= T.
double reverse_transition_std(int t, const NoiseSchedule& s);

/// F uniform fractions over steps {1..T}. Fraction f (1-based) covers
/// [end_of(f), start_of(f)] = [T*(f-1)/F + 1, T*f/F]; intervals are disjoint
/// and cover {1..T} exactly. Requires F >= 1 and F | T.
struct FractionLayout {
  int F = 0;
  int T = 0;

  static FractionLayout uniform(int T, int F);

  int start_of(int f) const;  // t_s(f) = T*f/F
  int end_of(int f) const;    // t_e(f) = T*(f-1)/F + 1
};

/// f = ceil(t*F/T) for t in [1, T].
int fraction_of_step(int t, const FractionLayout& layout);

}  // namespace fmd
