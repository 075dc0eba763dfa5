#include "fmd/counterfactual.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "fmd/error.hpp"
#include "fmd/rng.hpp"
#include "testutil.hpp"

using namespace fmd;

namespace {

// an untrained prior is a perfectly valid (if useless) denoiser stack,
// which is all the algebraic and accounting tests need
FmdPrior random_prior(int T, int F, int phase, int rows, int cols, uint64_t seed) {
  FmdPrior p;
  p.sched = build_schedule(T, ScheduleKind::Cosine);
  p.layout = FractionLayout::uniform(T, F);
  p.phase = phase;
  for (int f = 1; f <= F; ++f) {
    DenoiserConfig cfg;
    cfg.rows = rows;
    cfg.cols = cols;
    cfg.hidden_dim = 12;
    cfg.time_embed_dim = 4;
    cfg.total_steps = T;
    cfg.seed = mix_seed(seed, f);
    p.nets.emplace_back(cfg);
  }
  return p;
}

Classifier random_classifier(int rows, int cols, int classes, uint64_t seed, double scale = 0.5) {
  ClassifierConfig cfg;
  cfg.kind = ClassifierKind::SoftmaxLinear;
  cfg.feature_map = FeatureMap::FcUpperTriangle;
  cfg.classes = classes;
  cfg.rows = rows;
  cfg.cols = cols;
  Classifier clf(cfg);
  Rng rng(seed);
  for (double& p : clf.params()) p = scale * rng.gaussian();
  return clf;
}

Sample probe_sample(int rows, int cols, uint64_t seed) {
  Sample s;
  s.values = Rng(seed).gaussian_matrix(rows, cols);
  s.id = "probe";
  return s;
}

long expected_calls(int T, int F, int k, int delta_t) {
  // rollouts at each fraction entry plus one call per reverse step
  long calls = delta_t / k;
  int f_c = (delta_t * F + T - 1) / T;
  int t_cur = delta_t;
  for (int f = f_c; f >= 1; --f) {
    calls += t_cur / k;
    t_cur = T / F * (f - 1);
  }
  return calls;
}

}  // namespace

TEST(GuidanceTerm, ScaleAndLinearity) {
  NoiseSchedule s = build_schedule(16, ScheduleKind::Cosine);
  Rng rng(2);
  Matrix g = testutil::random_matrix(rng, 3, 4);
  Matrix z = guidance_term(g, 8, 2, 0.0, s);
  for (double v : z.flat()) EXPECT_EQ(v, 0.0);
  Matrix zero(3, 4);
  Matrix z2 = guidance_term(zero, 8, 2, 50.0, s);
  for (double v : z2.flat()) EXPECT_EQ(v, 0.0);
  // doubling s doubles the term
  Matrix a = guidance_term(g, 8, 2, 10.0, s);
  Matrix b = guidance_term(g, 8, 2, 20.0, s);
  EXPECT_LE(max_abs_diff(2.0 * a, b), 1e-12);
}

TEST(GuidanceTerm, HandEvaluatedGamma) {
  NoiseSchedule s = build_schedule(4, ScheduleKind::Cosine);
  double a1 = std::cos(M_PI / 8), g1 = std::sin(M_PI / 8);
  double a2 = std::cos(M_PI / 4), g2 = std::sin(M_PI / 4);
  double want = 7.0 * (g2 * g2) / (a2 * a2) * (a1 - a2 * g1 / g2);
  EXPECT_NEAR(guidance_gamma(2, 1, 7.0, s), want, 1e-14);
  EXPECT_THROW(guidance_gamma(1, 2, 1.0, s), Error);
}

TEST(Generate, GuidanceOffEqualsUnguidedRegeneration) {
  FmdPrior prior = random_prior(16, 2, 1, 3, 6, 5);
  Classifier clf = random_classifier(3, 6, 2, 6);
  for (uint64_t seed : {1ull, 2ull}) {
    Sample x0 = probe_sample(3, 6, 100 + seed);
    GuidanceConfig cfg;
    cfg.scale = 0.0;
    cfg.target = 1 - clf.predict(x0.values);
    cfg.rng_seed = seed;
    cfg.delta_t = 8;
    CounterfactualResult res = generate(prior, clf, x0, cfg);

    Matrix eps = Rng(seed).derive("counterfactual-noise").gaussian_matrix(3, 6);
    Matrix regen = rollout(prior, forward_diffuse(x0.values, 8, eps, prior.sched), 8);
    EXPECT_TRUE(testutil::bitwise_equal(res.counterfactual.values, regen));
    EXPECT_FALSE(res.trace.empty());
  }
}

TEST(Generate, ZeroWeightClassifierMatchesUnguided) {
  FmdPrior prior = random_prior(16, 2, 1, 3, 6, 7);
  ClassifierConfig ccfg;
  ccfg.classes = 2;
  ccfg.rows = 3;
  ccfg.cols = 6;
  ccfg.feature_map = FeatureMap::RawFlatten;
  Classifier zero_clf(ccfg);  // all-zero weights -> zero gradient
  Sample x0 = probe_sample(3, 6, 9);

  GuidanceConfig guided;
  guided.scale = 50.0;
  guided.target = 1 - zero_clf.predict(x0.values);
  guided.rng_seed = 3;
  guided.delta_t = 8;
  CounterfactualResult a = generate(prior, zero_clf, x0, guided);

  GuidanceConfig off = guided;
  off.scale = 0.0;
  CounterfactualResult b = generate(prior, zero_clf, x0, off);
  EXPECT_LE(max_abs_diff(a.counterfactual.values, b.counterfactual.values), 0.0);
}

TEST(Generate, CallCountMatchesClosedForm) {
  // the spec's worked example: T=64, F=4, k=8, delta_t=32 -> 10 calls
  FmdPrior prior = random_prior(64, 4, 3, 2, 4, 11);
  Classifier clf = random_classifier(2, 4, 2, 12);
  Sample x0 = probe_sample(2, 4, 13);
  GuidanceConfig cfg;
  cfg.target = 1 - clf.predict(x0.values);
  cfg.delta_t = 32;
  cfg.rng_seed = 1;
  CounterfactualResult res = generate(prior, clf, x0, cfg);
  EXPECT_EQ(res.denoiser_calls, 10);
  EXPECT_EQ(res.denoiser_calls, expected_calls(64, 4, 8, 32));
  EXPECT_EQ(res.trace.size(), 2u);  // f_c = 2
  EXPECT_EQ(res.trace.back().calls_after, res.denoiser_calls);

  for (int dt : {8, 16, 24, 40, 64}) {
    GuidanceConfig c2 = cfg;
    c2.delta_t = dt;
    CounterfactualResult r2 = generate(prior, clf, x0, c2);
    EXPECT_EQ(r2.denoiser_calls, expected_calls(64, 4, 8, dt)) << "delta_t=" << dt;
  }
}

TEST(Generate, ErrorsAndValidation) {
  FmdPrior prior = random_prior(16, 2, 1, 3, 6, 15);
  Classifier clf = random_classifier(3, 6, 2, 16);
  Sample x0 = probe_sample(3, 6, 17);
  int predicted = clf.predict(x0.values);

  GuidanceConfig bad;
  bad.target = predicted;  // already the prediction
  bad.delta_t = 8;
  try {
    generate(prior, clf, x0, bad);
    FAIL() << "expected already_target";
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), "already_target");
  }

  GuidanceConfig off_grid;
  off_grid.target = 1 - predicted;
  off_grid.delta_t = 7;  // stride is 2
  EXPECT_THROW(generate(prior, clf, x0, off_grid), Error);

  GuidanceConfig bad_class = off_grid;
  bad_class.delta_t = 8;
  bad_class.target = 5;
  EXPECT_THROW(generate(prior, clf, x0, bad_class), Error);
}

TEST(Generate, DeterministicAndDiffIdentity) {
  FmdPrior prior = random_prior(16, 2, 0, 2, 4, 19);
  Classifier clf = random_classifier(2, 4, 2, 20);
  Sample x0 = probe_sample(2, 4, 21);
  GuidanceConfig cfg;
  cfg.target = 1 - clf.predict(x0.values);
  cfg.scale = 25.0;
  cfg.rng_seed = 4;
  CounterfactualResult a = generate(prior, clf, x0, cfg);
  CounterfactualResult b = generate(prior, clf, x0, cfg);
  EXPECT_TRUE(testutil::bitwise_equal(a.counterfactual.values, b.counterfactual.values));
  EXPECT_EQ(a.denoiser_calls, b.denoiser_calls);

  // diff is exactly the stored subtraction; summing it back is exact up to
  // one rounding of the re-addition
  Matrix resub = a.counterfactual.values - a.original.values;
  EXPECT_TRUE(testutil::bitwise_equal(resub, a.diff));
  Matrix reconstructed = a.original.values + a.diff;
  EXPECT_LE(max_abs_diff(reconstructed, a.counterfactual.values), 1e-15);
  EXPECT_EQ(a.target, cfg.target);
}

TEST(Generate, PerStepModeRuns) {
  FmdPrior prior = random_prior(16, 2, 1, 2, 4, 23);
  Classifier clf = random_classifier(2, 4, 2, 24);
  Sample x0 = probe_sample(2, 4, 25);
  GuidanceConfig cfg;
  cfg.target = 1 - clf.predict(x0.values);
  cfg.per_step = true;
  cfg.delta_t = 8;
  CounterfactualResult res = generate(prior, clf, x0, cfg);
  // per-step mode pays one rollout per reverse step
  EXPECT_GT(res.denoiser_calls, expected_calls(16, 2, 2, 8));
  EXPECT_TRUE(res.diff.all_finite());
}

TEST(Generate, ScoreSurrogateEqualsClassifierGradientUnderOracle) {
  // with a perfect denoiser the rollout returns x0 exactly, so the guidance
  // gradient equals the classifier gradient at the original input
  NoiseSchedule sched = build_schedule(16, ScheduleKind::Cosine);
  FractionLayout layout = FractionLayout::uniform(16, 2);
  Classifier clf = random_classifier(3, 6, 2, 26);
  Sample x0 = probe_sample(3, 6, 27);
  Matrix eps = Rng(28).gaussian_matrix(3, 6);
  Matrix xt = forward_diffuse(x0.values, 8, eps, sched);
  Matrix denoised = rollout_with(
      sched, layout, 2, [&x0](int, const Matrix&, int) { return x0.values; }, xt, 8);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 6; ++c) ASSERT_EQ(denoised(r, c), x0.values(r, c));
  }
  auto from_rollout = clf.posterior_and_input_grad(denoised, 1);
  auto at_original = clf.posterior_and_input_grad(x0.values, 1);
  EXPECT_TRUE(testutil::bitwise_equal(from_rollout.grad, at_original.grad));
  EXPECT_EQ(from_rollout.prob, at_original.prob);
}

TEST(UnconditionalSample, SeedContract) {
  FmdPrior prior = random_prior(16, 2, 1, 2, 4, 31);
  Sample a = unconditional_sample(prior, 2, 4, 7);
  Sample b = unconditional_sample(prior, 2, 4, 7);
  Sample c = unconditional_sample(prior, 2, 4, 8);
  EXPECT_TRUE(testutil::bitwise_equal(a.values, b.values));
  EXPECT_GT(max_abs_diff(a.values, c.values), 0.0);
  EXPECT_THROW(unconditional_sample(prior, 3, 4, 7), Error);
}
