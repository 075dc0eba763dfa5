#include "fmd/counterfactual.hpp"

#include <cmath>
#include <string>

#include "fmd/error.hpp"
#include "fmd/rng.hpp"

namespace fmd {

double guidance_gamma(int t, int k, double s, const NoiseSchedule& sched) {
  require(k >= 1 && t >= k && t <= sched.T, "invalid_argument",
          "guidance_gamma: t=" + std::to_string(t) + ", k=" + std::to_string(k) + " out of range");
  double at = sched.alpha[t], gt = sched.sigma[t];
  require(gt > 0.0, "invalid_argument", "guidance_gamma: sigma_t is zero");
  double ak = sched.alpha[t - k], gk = sched.sigma[t - k];
  return s * (gt * gt) / (at * at) * (ak - at * gk / gt);
}

Matrix guidance_term(const Matrix& grad, int t, int k, double s, const NoiseSchedule& sched) {
  return guidance_gamma(t, k, s, sched) * grad;
}

CounterfactualResult generate(const FmdPrior& prior, const Classifier& clf, const Sample& x0,
                              const GuidanceConfig& cfg) {
  validate_prior(prior);
  const auto& dcfg = prior.nets.front().config();
  require(x0.values.rows() == dcfg.rows && x0.values.cols() == dcfg.cols, "shape_mismatch",
          "generate: sample shape does not match the prior");
  require(clf.config().rows == dcfg.rows && clf.config().cols == dcfg.cols, "shape_mismatch",
          "generate: classifier shape does not match the prior");
  require(cfg.target >= 0 && cfg.target < clf.config().classes, "invalid_argument",
          "generate: target class out of range");

  const NoiseSchedule& sched = prior.sched;
  const FractionLayout& layout = prior.layout;
  int k = prior.step_size();
  int dt = cfg.delta_t < 0 ? sched.T / 2 : cfg.delta_t;
  require(dt >= 1 && dt <= sched.T, "invalid_argument",
          "generate: delta_t=" + std::to_string(dt) + " out of [1," + std::to_string(sched.T) + "]");
  require(dt % k == 0, "invalid_argument",
          "generate: delta_t=" + std::to_string(dt) + " is not on the stride-" + std::to_string(k) +
              " grid");

  int predicted = clf.predict(x0.values);
  require(predicted != cfg.target, "already_target",
          "generate: classifier already predicts class " + std::to_string(cfg.target) +
              " for sample '" + x0.id + "'");

  CounterfactualResult res;
  res.original = x0;
  res.target = cfg.target;

  Matrix eps = Rng(cfg.rng_seed).derive("counterfactual-noise").gaussian_matrix(dcfg.rows, dcfg.cols);
  Matrix x = forward_diffuse(x0.values, dt, eps, sched);

  long calls = 0;
  int f_c = fraction_of_step(dt, layout);
  int t_cur = dt;
  for (int f = f_c; f >= 1; --f) {
    Matrix grad;
    double entry_posterior = 0.0;
    if (!cfg.per_step) {
      long rc = 0;
      Matrix denoised = rollout(prior, x, t_cur, &rc);
      calls += rc;
      auto lg = clf.posterior_and_input_grad(denoised, cfg.target);
      grad = std::move(lg.grad);
      entry_posterior = lg.prob;
    }

    int t_lo = layout.end_of(f);
    double gamma_used = 0.0;
    int t = t_cur;
    while (t >= t_lo) {
      if (cfg.per_step) {
        long rc = 0;
        Matrix denoised = rollout(prior, x, t, &rc);
        calls += rc;
        auto lg = clf.posterior_and_input_grad(denoised, cfg.target);
        grad = std::move(lg.grad);
        if (t == t_cur) entry_posterior = lg.prob;
      }
      Matrix x0_hat = denoise(prior.nets[f - 1], x, t);
      ++calls;
      Matrix next = ddim_step(x, x0_hat, t, k, sched);
      bool final_step = (t - k < t_lo);
      if ((final_step || cfg.per_step) && cfg.scale != 0.0) {
        double gamma = guidance_gamma(t, k, cfg.scale, sched);
        next += gamma * grad;
        if (final_step) gamma_used = gamma;
      }
      x = std::move(next);
      t -= k;
    }
    res.trace.push_back({f, t_cur, entry_posterior, gamma_used, calls});
    t_cur = t;
  }

  res.counterfactual.values = std::move(x);
  res.counterfactual.label = cfg.target;
  res.counterfactual.id = x0.id.empty() ? "counterfactual" : x0.id + "-cf" + std::to_string(cfg.target);
  res.diff = res.counterfactual.values - res.original.values;
  res.denoiser_calls = calls;
  auto post = clf.posterior(res.counterfactual.values);
  res.posterior_target_final = post[cfg.target];
  int argmax = 0;
  for (int c = 1; c < static_cast<int>(post.size()); ++c) {
    if (post[c] > post[argmax]) argmax = c;
  }
  res.flipped = (argmax == cfg.target);
  return res;
}

Sample unconditional_sample(const FmdPrior& prior, int rows, int cols, uint64_t seed) {
  validate_prior(prior);
  const auto& dcfg = prior.nets.front().config();
  require(rows == dcfg.rows && cols == dcfg.cols, "shape_mismatch",
          "unconditional_sample: requested shape does not match the prior");
  Matrix noise = Rng(seed).derive("unconditional-noise").gaussian_matrix(rows, cols);
  Sample s;
  s.values = rollout(prior, noise, prior.sched.T);
  s.id = "uncond-" + std::to_string(seed);
  return s;
}

}  // namespace fmd
