#include "fmd/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "fmd/error.hpp"

namespace fmd {

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "cosine") return ScheduleKind::Cosine;
  if (s == "linear-lambda") return ScheduleKind::LinearLambda;
  fail("invalid_argument", "unknown schedule kind '" + s + "' (expected cosine | linear-lambda)");
}

std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::Cosine ? "cosine" : "linear-lambda";
}

namespace {

double clamp_lambda(double alpha, double sigma) {
  if (sigma == 0.0) return kLambdaClamp;
  if (alpha == 0.0) return -kLambdaClamp;
  double l = std::log((alpha * alpha) / (sigma * sigma));
  return std::clamp(l, -kLambdaClamp, kLambdaClamp);
}

}  // namespace

NoiseSchedule build_schedule(int T, ScheduleKind kind) {
  require(T >= 2, "invalid_argument", "schedule needs T >= 2, got " + std::to_string(T));
  NoiseSchedule s;
  s.T = T;
  s.kind = kind;
  s.alpha.resize(T + 1);
  s.sigma.resize(T + 1);
  s.lambda.resize(T + 1);
  for (int t = 0; t <= T; ++t) {
    double a, g;
    if (kind == ScheduleKind::Cosine) {
      double theta = (static_cast<double>(t) / T) * (M_PI / 2.0);
      a = std::cos(theta);
      g = std::sin(theta);
    } else {
      // Log-SNR linear from +kLambdaClamp to -kLambdaClamp, endpoints pinned
      // exactly so that t = 0 is the identity and t = T is (near) pure noise.
      if (t == 0) {
        a = 1.0;
        g = 0.0;
      } else {
        double l = kLambdaClamp - 2.0 * kLambdaClamp * static_cast<double>(t) / T;
        double a2 = 1.0 / (1.0 + std::exp(-l));
        a = std::sqrt(a2);
        g = std::sqrt(1.0 - a2);
      }
    }
    s.alpha[t] = a;
    s.sigma[t] = g;
    s.lambda[t] = clamp_lambda(a, g);
  }
  // Exact endpoints regardless of family.
  s.alpha[0] = 1.0;
  s.sigma[0] = 0.0;
  s.lambda[0] = kLambdaClamp;
  validate_schedule(s);
  return s;
}

NoiseSchedule build_schedule(int T, const std::string& kind) {
  return build_schedule(T, schedule_kind_from_string(kind));
}

void validate_schedule(const NoiseSchedule& s) {
  require(s.T >= 2, "invalid_argument", "schedule T must be >= 2");
  size_t n = static_cast<size_t>(s.T) + 1;
  require(s.alpha.size() == n && s.sigma.size() == n && s.lambda.size() == n, "invalid_argument",
          "schedule tables must have T+1 entries");
  require(s.alpha[0] == 1.0 && s.sigma[0] == 0.0, "invalid_argument",
          "schedule endpoint: alpha_0 must be 1 and sigma_0 must be 0");
  for (int t = 0; t <= s.T; ++t) {
    double a = s.alpha[t], g = s.sigma[t];
    require(a > 0.0 && a <= 1.0, "invalid_argument",
            "alpha out of (0,1] at t=" + std::to_string(t));
    // sigma_T may equal 1 to the last bit (cosine at t = T); interior values
    // stay strictly below 1 via monotonicity.
    require(g >= 0.0 && g <= 1.0, "invalid_argument",
            "sigma out of [0,1] at t=" + std::to_string(t));
    double dev = std::abs(a * a + g * g - 1.0);
    require(dev <= 1e-12, "invalid_argument",
            "variance preservation violated at t=" + std::to_string(t));
    if (t > 0) {
      require(s.alpha[t] < s.alpha[t - 1], "invalid_argument",
              "alpha not strictly decreasing at t=" + std::to_string(t));
      require(s.sigma[t] > s.sigma[t - 1], "invalid_argument",
              "sigma not strictly increasing at t=" + std::to_string(t));
      require(s.lambda[t] <= s.lambda[t - 1], "invalid_argument",
              "lambda not decreasing at t=" + std::to_string(t));
    }
  }
}

Matrix forward_diffuse(const Matrix& x0, int t, const Matrix& eps, const NoiseSchedule& s) {
  require(t >= 0 && t <= s.T, "invalid_argument",
          "forward_diffuse: t=" + std::to_string(t) + " out of [0," + std::to_string(s.T) + "]");
  check_same_shape(x0, eps, "forward_diffuse");
  double a = s.alpha[t], g = s.sigma[t];
  Matrix out(x0.rows(), x0.cols());
  auto xo = x0.flat();
  auto ep = eps.flat();
  auto ov = out.flat();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = a * xo[i] + g * ep[i];
  return out;
}

Matrix ddim_step(const Matrix& x_t, const Matrix& x0_hat, int t, int k, const NoiseSchedule& s) {
  require(k >= 1, "invalid_argument", "ddim_step: k must be >= 1");
  require(t >= 1 && t <= s.T, "invalid_argument",
          "ddim_step: source step t=" + std::to_string(t) + " out of [1," + std::to_string(s.T) + "]");
  require(t - k >= 0, "invalid_argument",
          "ddim_step: t-k=" + std::to_string(t - k) + " below 0");
  check_same_shape(x_t, x0_hat, "ddim_step");
  double at = s.alpha[t], gt = s.sigma[t];
  require(gt > 0.0, "invalid_argument", "ddim_step: sigma_t is zero at t=" + std::to_string(t));
  double ak = s.alpha[t - k], gk = s.sigma[t - k];
  Matrix out(x_t.rows(), x_t.cols());
  auto xv = x_t.flat();
  auto hv = x0_hat.flat();
  auto ov = out.flat();
  for (size_t i = 0; i < ov.size(); ++i) {
    ov[i] = ak * hv[i] + gk * (xv[i] - at * hv[i]) / gt;
  }
  return out;
}

double reverse_transition_std(int t, const NoiseSchedule& s) {
  require(t >= 1 && t <= s.T, "invalid_argument",
          "reverse_transition_std: t=" + std::to_string(t) + " out of [1," + std::to_string(s.T) + "]");
  double ap = s.alpha[t - 1], gp = s.sigma[t - 1];
  double at = s.alpha[t], gt = s.sigma[t];
  require(gt > 0.0 && ap > 0.0, "invalid_argument",
          "reverse_transition_std: degenerate sigma_t or alpha_{t-1}");
  double rad = ap * ap - at * at;
  if (rad < 0.0) rad = 0.0;  // guards roundoff; alpha is strictly decreasing
  return gp / (gt * ap) * std::sqrt(rad);
}

FractionLayout FractionLayout::uniform(int T, int F) {
  require(F >= 1, "invalid_argument", "fraction count F must be >= 1");
  require(T >= F && T % F == 0, "invalid_argument",
          "F=" + std::to_string(F) + " must divide T=" + std::to_string(T));
  FractionLayout l;
  l.F = F;
  l.T = T;
  return l;
}

int FractionLayout::start_of(int f) const {
  require(f >= 1 && f <= F, "invalid_argument", "fraction index out of range");
  return T / F * f;
}

int FractionLayout::end_of(int f) const {
  require(f >= 1 && f <= F, "invalid_argument", "fraction index out of range");
  return T / F * (f - 1) + 1;
}

int fraction_of_step(int t, const FractionLayout& layout) {
  require(t >= 1 && t <= layout.T, "invalid_argument",
          "fraction_of_step: t=" + std::to_string(t) + " out of [1," + std::to_string(layout.T) + "]");
  // ceil(t*F/T) in integer arithmetic.
  long long num = static_cast<long long>(t) * layout.F;
  return static_cast<int>((num + layout.T - 1) / layout.T);
}

}  // namespace fmd
