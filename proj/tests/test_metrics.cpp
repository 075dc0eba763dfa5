#include "fmd/metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fmd/error.hpp"
#include "fmd/rng.hpp"
#include "testutil.hpp"

using namespace fmd;

TEST(Proximity, ExamplesAndBruteForce) {
  Matrix x(2, 2, 0.0);
  EXPECT_EQ(proximity(x, x), 0.0);

  Matrix ones(2, 2, 1.0);
  EXPECT_DOUBLE_EQ(proximity(x, ones), 100.0);  // 100 * (4/4)

  Rng rng(1);
  for (int it = 0; it < 100; ++it) {
    Matrix a = testutil::random_matrix(rng, 3, 7);
    Matrix b = testutil::random_matrix(rng, 3, 7);
    double brute = 0.0;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 7; ++c) brute += (b(r, c) - a(r, c)) * (b(r, c) - a(r, c));
    }
    brute = 100.0 * brute / 21.0;
    EXPECT_NEAR(proximity(a, b), brute, 1e-10);
    EXPECT_NEAR(proximity(a, b), proximity(b, a), 1e-12);
    EXPECT_NEAR(proximity_l2(a, b), 100.0 * std::sqrt(brute / 100.0 / 1.0), 1e-10);
  }
  Matrix wrong(2, 3);
  EXPECT_THROW(proximity(x, wrong), Error);
}

TEST(Sparsity, Examples) {
  Matrix x(2, 5, 0.0);
  std::vector<double> sigma{0.5};
  EXPECT_EQ(sparsity(x, x, sigma), 0.0);

  Matrix all_changed(2, 5, 5.0);  // 10 sigma
  EXPECT_EQ(sparsity(x, all_changed, sigma), 100.0);

  Matrix three(2, 5, 0.0);
  three(0, 0) = 1.0;
  three(0, 3) = -2.0;
  three(1, 4) = 0.9;
  EXPECT_EQ(sparsity(x, three, sigma), 30.0);

  // per-feature thresholds: exactly-at-threshold does not count
  std::vector<double> per(10, 1.0);
  Matrix at(2, 5, 1.0);
  EXPECT_EQ(sparsity(x, at, per), 0.0);
  per.assign(10, 0.999);
  EXPECT_EQ(sparsity(x, at, per), 100.0);

  std::vector<double> bad(3, 1.0);
  EXPECT_THROW(sparsity(x, x, bad), Error);
}

TEST(Frechet, IdenticalAndMeanShift) {
  Rng rng(3);
  std::vector<std::vector<double>> a;
  for (int i = 0; i < 40; ++i) {
    std::vector<double> v(5);
    for (double& x : v) x = rng.gaussian();
    a.push_back(v);
  }
  for (auto mode : {CovMode::Diagonal, CovMode::Full}) {
    EXPECT_NEAR(frechet_distance(a, a, mode), 0.0, 1e-8);
  }
  // equal covariances, means shifted by d -> ||d||^2
  std::vector<double> d{0.5, -1.0, 2.0, 0.0, 0.25};
  double want = 0.0;
  for (double v : d) want += v * v;
  auto b = a;
  for (auto& v : b) {
    for (size_t j = 0; j < v.size(); ++j) v[j] += d[j];
  }
  for (auto mode : {CovMode::Diagonal, CovMode::Full}) {
    EXPECT_NEAR(frechet_distance(a, b, mode), want, 1e-8);
  }
}

TEST(Frechet, DiagonalModeMatchesScalarOracle) {
  Rng rng(4);
  for (int it = 0; it < 20; ++it) {
    int n = 30, dim = 4;
    std::vector<std::vector<double>> a(n, std::vector<double>(dim));
    std::vector<std::vector<double>> b(n, std::vector<double>(dim));
    for (auto& v : a) {
      for (double& x : v) x = 1.5 * rng.gaussian() + 0.3;
    }
    for (auto& v : b) {
      for (double& x : v) x = 0.8 * rng.gaussian() - 0.1;
    }
    // scalar-by-scalar closed form, computed independently
    double want = 0.0;
    for (int j = 0; j < dim; ++j) {
      double ma = 0, mb = 0;
      for (int i = 0; i < n; ++i) {
        ma += a[i][j];
        mb += b[i][j];
      }
      ma /= n;
      mb /= n;
      double va = 0, vb = 0;
      for (int i = 0; i < n; ++i) {
        va += (a[i][j] - ma) * (a[i][j] - ma);
        vb += (b[i][j] - mb) * (b[i][j] - mb);
      }
      va /= (n - 1);
      vb /= (n - 1);
      want += (ma - mb) * (ma - mb) + (std::sqrt(va) - std::sqrt(vb)) * (std::sqrt(va) - std::sqrt(vb));
    }
    EXPECT_NEAR(frechet_distance(a, b, CovMode::Diagonal), want, 1e-8);
  }
}

TEST(Frechet, FullModeHandlesRankDeficiency) {
  // fewer samples than dimensions: covariance is singular, the eigenvalue
  // floor keeps the result finite and non-negative (within roundoff)
  Rng rng(5);
  std::vector<std::vector<double>> a(3, std::vector<double>(6));
  std::vector<std::vector<double>> b(3, std::vector<double>(6));
  for (auto& v : a) {
    for (double& x : v) x = rng.gaussian();
  }
  for (auto& v : b) {
    for (double& x : v) x = rng.gaussian();
  }
  int floored = 0;
  double d = frechet_distance(a, b, CovMode::Full, &floored);
  EXPECT_TRUE(std::isfinite(d));
  EXPECT_GE(d, -1e-8);
  EXPECT_THROW(frechet_distance(std::vector<std::vector<double>>{{1.0}}, b, CovMode::Full), Error);
}

namespace {

// optimal-assignment oracle for 1-d transport, by permutation enumeration
double emd_bruteforce(std::vector<double> a, std::vector<double> b) {
  std::vector<int> perm(b.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double cost = 0.0;
    for (size_t i = 0; i < a.size(); ++i) cost += std::abs(a[i] - b[perm[i]]);
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(a.size());
}

}  // namespace

TEST(Wasserstein, Examples) {
  EXPECT_EQ(wasserstein_1d({1, 2, 3}, {3, 1, 2}), 0.0);
  EXPECT_EQ(wasserstein_1d({0}, {5}), 5.0);

  Rng rng(6);
  for (int it = 0; it < 50; ++it) {
    std::vector<double> a(6), b(6);
    for (double& x : a) x = rng.uniform(-2, 2);
    for (double& x : b) x = rng.uniform(-2, 2);
    EXPECT_NEAR(wasserstein_1d(a, b), emd_bruteforce(a, b), 1e-10);
  }
}

TEST(Wasserstein, MetricProperties) {
  Rng rng(7);
  for (int it = 0; it < 50; ++it) {
    std::vector<double> a(8), b(8), c(8);
    for (double& x : a) x = rng.gaussian();
    for (double& x : b) x = rng.gaussian();
    for (double& x : c) x = rng.gaussian();
    double ab = wasserstein_1d(a, b), ba = wasserstein_1d(b, a);
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_LE(ab, wasserstein_1d(a, c) + wasserstein_1d(c, b) + 1e-10);
    EXPECT_NEAR(wasserstein_1d(a, a), 0.0, 1e-15);
  }
}

TEST(Wasserstein, UnequalSizes) {
  // equal-mass refinement leaves the distance unchanged
  EXPECT_NEAR(wasserstein_1d({0, 1}, {0, 0, 1, 1}), 0.0, 1e-12);
  // hand-integrated quantile coupling: {0,2} vs {0,1,2,3}
  EXPECT_NEAR(wasserstein_1d({0, 2}, {0, 1, 2, 3}), 0.5, 1e-12);
}

TEST(FcMatrix, ExamplesAndOracle) {
  Rng rng(8);
  Matrix x = testutil::random_matrix(rng, 3, 50);
  // make row 2 the negation of row 1
  for (int l = 0; l < 50; ++l) x(2, l) = -x(1, l);
  Matrix fc = fc_matrix(x);
  EXPECT_EQ(fc(0, 0), 1.0);
  EXPECT_EQ(fc(1, 1), 1.0);
  EXPECT_NEAR(fc(1, 2), -1.0, 1e-12);

  // textbook-formula oracle
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double mi = 0, mj = 0;
      for (int l = 0; l < 50; ++l) {
        mi += x(i, l);
        mj += x(j, l);
      }
      mi /= 50;
      mj /= 50;
      double num = 0, di = 0, dj = 0;
      for (int l = 0; l < 50; ++l) {
        num += (x(i, l) - mi) * (x(j, l) - mj);
        di += (x(i, l) - mi) * (x(i, l) - mi);
        dj += (x(j, l) - mj) * (x(j, l) - mj);
      }
      EXPECT_NEAR(fc(i, j), num / std::sqrt(di * dj), 1e-10);
      EXPECT_NEAR(fc(i, j), fc(j, i), 1e-12);
      EXPECT_LE(std::abs(fc(i, j)), 1.0 + 1e-12);
    }
  }
}

TEST(FcMatrix, AffineInvarianceAndZeroVariance) {
  Rng rng(9);
  Matrix x = testutil::random_matrix(rng, 4, 30);
  Matrix y = x;
  for (int l = 0; l < 30; ++l) {
    y(0, l) = 3.5 * x(0, l) + 2.0;  // positive-slope affine rescale
    y(2, l) = 0.1 * x(2, l) - 7.0;
  }
  EXPECT_LE(max_abs_diff(fc_matrix(x), fc_matrix(y)), 1e-10);

  Matrix z = x;
  for (int l = 0; l < 30; ++l) z(1, l) = 4.2;  // constant region
  int warn = 0;
  Matrix fcz = fc_matrix(z, &warn);
  EXPECT_EQ(warn, 1);
  EXPECT_EQ(fcz(1, 1), 1.0);
  for (int j = 0; j < 4; ++j) {
    if (j != 1) EXPECT_EQ(fcz(1, j), 0.0);
  }
}

TEST(FcUpperVjp, MatchesFiniteDifferences) {
  Rng rng(10);
  Matrix x = testutil::random_matrix(rng, 4, 12);
  std::vector<double> g(fc_feature_count(4));
  for (double& v : g) v = rng.gaussian();
  Matrix grad = fc_upper_vjp(x, g);
  auto scalar = [&](const Matrix& m) {
    auto f = fc_upper(m);
    double acc = 0;
    for (size_t i = 0; i < f.size(); ++i) acc += g[i] * f[i];
    return acc;
  };
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 12; ++c) {
      const double h = 1e-6;
      Matrix xp = x;
      xp(r, c) += h;
      double hi = scalar(xp);
      xp(r, c) -= 2 * h;
      double lo = scalar(xp);
      ASSERT_LE(testutil::rel_err(grad(r, c), (hi - lo) / (2 * h), 1e-7), 1e-4);
    }
  }
}

namespace {

CounterfactualResult fake_result(const Matrix& cf_values, int target) {
  CounterfactualResult r;
  r.original.values = Matrix(1, 2, 0.0);
  r.counterfactual.values = cf_values;
  r.target = target;
  r.diff = r.counterfactual.values - r.original.values;
  return r;
}

// classifier that predicts by the sign of x(0,0): class 1 iff positive
Classifier sign_classifier() {
  ClassifierConfig cfg;
  cfg.kind = ClassifierKind::SoftmaxLinear;
  cfg.feature_map = FeatureMap::RawFlatten;
  cfg.classes = 2;
  cfg.rows = 1;
  cfg.cols = 2;
  Classifier clf(cfg);
  clf.params()[0] = -1.0;  // w_0 . x = -x(0,0)
  clf.params()[2] = 1.0;   // w_1 . x = +x(0,0)
  return clf;
}

}  // namespace

TEST(FlipRate, HandCounts) {
  Classifier clf = sign_classifier();
  Matrix pos(1, 2, 0.0), neg(1, 2, 0.0);
  pos(0, 0) = 2.0;
  neg(0, 0) = -2.0;

  std::vector<CounterfactualResult> all_flipped{fake_result(pos, 1), fake_result(neg, 0)};
  EXPECT_EQ(flip_rate(all_flipped, clf), 1.0);

  std::vector<CounterfactualResult> none{fake_result(neg, 1), fake_result(pos, 0)};
  EXPECT_EQ(flip_rate(none, clf), 0.0);

  // class 1 targeted twice (one hit), class 0 targeted once (hit):
  // FR = (1/2) (1/2 + 1) = 0.75
  std::vector<CounterfactualResult> mixed{fake_result(pos, 1), fake_result(neg, 1),
                                          fake_result(neg, 0)};
  int classes = 0;
  EXPECT_DOUBLE_EQ(flip_rate(mixed, clf, &classes), 0.75);
  EXPECT_EQ(classes, 2);

  // a class with zero targeted results is excluded from the average
  std::vector<CounterfactualResult> only1{fake_result(pos, 1), fake_result(pos, 1)};
  EXPECT_EQ(flip_rate(only1, clf, &classes), 1.0);
  EXPECT_EQ(classes, 1);
}

TEST(BiomarkerMap, RankAndSize) {
  Rng rng(11);
  // pairs where exactly one FC entry moves: region 1 mirrors region 0 in the
  // counterfactual
  Sample orig, cf;
  orig.values = testutil::random_matrix(rng, 3, 40);
  cf.values = orig.values;
  for (int l = 0; l < 40; ++l) cf.values(1, l) = orig.values(0, l);
  std::vector<std::pair<Sample, Sample>> pairs{{orig, cf}};
  auto top = biomarker_map(pairs, 40.0);
  ASSERT_FALSE(top.empty());
  EXPECT_EQ(top.front().i, 0);
  EXPECT_EQ(top.front().j, 1);

  auto all = biomarker_map(pairs, 100.0);
  EXPECT_EQ(static_cast<int>(all.size()), fc_feature_count(3));

  // percentile cut against a full-sort oracle
  Rng rng2(12);
  std::vector<std::pair<Sample, Sample>> rp;
  for (int i = 0; i < 4; ++i) {
    Sample a, b;
    a.values = testutil::random_matrix(rng2, 5, 30);
    b.values = testutil::random_matrix(rng2, 5, 30);
    rp.push_back({a, b});
  }
  double pct = 30.0;
  auto got = biomarker_map(rp, pct);
  // oracle: recompute scores, full sort, take ceil(pct% of M) with ties
  int nf = fc_feature_count(5);
  std::vector<double> score(nf, 0.0);
  for (auto& [a, b] : rp) {
    auto fa = fc_upper(a.values);
    auto fb = fc_upper(b.values);
    for (int f = 0; f < nf; ++f) score[f] += std::abs(fb[f] - fa[f]);
  }
  for (double& s : score) s /= rp.size();
  std::vector<double> sorted = score;
  std::sort(sorted.rbegin(), sorted.rend());
  int keep = static_cast<int>(std::ceil(pct / 100.0 * nf));
  double cut = sorted[keep - 1];
  std::vector<int> oracle;
  for (int f = 0; f < nf; ++f) {
    if (score[f] >= cut) oracle.push_back(f);
  }
  EXPECT_EQ(got.size(), oracle.size());
  for (const auto& feat : got) EXPECT_GE(feat.score, cut);
}

TEST(LogisticProbe, SeparableAndPermuted) {
  Rng rng(13);
  std::vector<LabelledFeatures> train, test;
  for (int i = 0; i < 60; ++i) {
    int y = i % 2;
    std::vector<double> f(3);
    for (double& v : f) v = rng.gaussian() * 0.3 + (y ? 2.0 : -2.0);
    (i < 40 ? train : test).push_back({f, y});
  }
  TrainConfig cfg;
  cfg.epochs = 80;
  cfg.lr = 0.1;
  auto res = logistic_probe(train, test, cfg, 3);
  EXPECT_EQ(res.accuracy, 1.0);

  // shuffled labels land near chance (binomial band around 1/2)
  Rng shuffle(14);
  auto permuted = train;
  for (auto& [f, y] : permuted) y = shuffle.uniform_int(0, 1);
  auto chance = logistic_probe(permuted, test, cfg, 3);
  EXPECT_LE(std::abs(chance.accuracy - 0.5), 0.35);

  std::vector<LabelledFeatures> single{{std::vector<double>{1.0}, 0}};
  EXPECT_THROW(logistic_probe(single, test, cfg, 3), Error);
}

TEST(LogisticProbe, HandBuiltConfusionCase) {
  // training data pins the decision boundary near 0, the 4 test samples then
  // produce one TP/FP/FN per class: accuracy 0.5, macro-F1 0.5
  std::vector<LabelledFeatures> train;
  for (int i = 0; i < 30; ++i) {
    train.push_back({{-10.0}, 0});
    train.push_back({{+10.0}, 1});
  }
  std::vector<LabelledFeatures> test{
      {{-10.0}, 0}, {{+10.0}, 1}, {{-10.0}, 1}, {{+10.0}, 0}};
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.lr = 0.1;
  auto res = logistic_probe(train, test, cfg, 5);
  EXPECT_DOUBLE_EQ(res.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(res.macro_f1, 0.5);
}
