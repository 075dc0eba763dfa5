#include "fmd/classifier.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "fmd/data_io.hpp"
#include "fmd/error.hpp"
#include "fmd/fc.hpp"
#include "fmd/rng.hpp"
#include "testutil.hpp"

using namespace fmd;

namespace {

ClassifierConfig base_config(ClassifierKind kind, FeatureMap map) {
  ClassifierConfig cfg;
  cfg.kind = kind;
  cfg.feature_map = map;
  cfg.classes = 3;
  cfg.rows = 4;
  cfg.cols = 10;
  cfg.hidden_dim = 5;
  cfg.seed = 21;
  return cfg;
}

void randomize(Classifier& clf, uint64_t seed, double scale = 0.7) {
  Rng rng(seed);
  for (double& p : clf.params()) p = scale * rng.gaussian();
}

double log_prob(const Classifier& clf, const Matrix& x, int y) {
  return std::log(clf.posterior(x)[y]);
}

}  // namespace

TEST(Classifier, ZeroWeightsGiveUniformPosteriorAndZeroGradient) {
  for (auto map : {FeatureMap::RawFlatten, FeatureMap::FcUpperTriangle}) {
    Classifier clf(base_config(ClassifierKind::SoftmaxLinear, map));
    Rng rng(2);
    Matrix x = testutil::random_matrix(rng, 4, 10);
    auto p = clf.posterior(x);
    for (double v : p) EXPECT_NEAR(v, 1.0 / 3.0, 1e-12);
    auto lg = clf.posterior_and_input_grad(x, 1);
    for (double g : lg.grad.flat()) EXPECT_EQ(g, 0.0);
  }
}

TEST(Classifier, PosteriorIsProbabilityVector) {
  for (auto kind : {ClassifierKind::SoftmaxLinear, ClassifierKind::SmallDense}) {
    for (auto map : {FeatureMap::RawFlatten, FeatureMap::FcUpperTriangle}) {
      Classifier clf(base_config(kind, map));
      randomize(clf, 33);
      Rng rng(4);
      for (int it = 0; it < 20; ++it) {
        Matrix x = testutil::random_matrix(rng, 4, 10);
        auto p = clf.posterior(x);
        double sum = 0.0;
        for (double v : p) {
          EXPECT_GE(v, 0.0);
          sum += v;
        }
        EXPECT_NEAR(sum, 1.0, 1e-10);
      }
    }
  }
}

TEST(Classifier, TwoClassClosedFormGradient) {
  // C = 2 softmax-linear on raw features: grad = (1 - p(y|x)) (w_y - w_{1-y})
  ClassifierConfig cfg = base_config(ClassifierKind::SoftmaxLinear, FeatureMap::RawFlatten);
  cfg.classes = 2;
  Classifier clf(cfg);
  randomize(clf, 17);
  Rng rng(8);
  Matrix x = testutil::random_matrix(rng, 4, 10);
  int fdim = clf.feature_dim();
  for (int y : {0, 1}) {
    auto lg = clf.posterior_and_input_grad(x, y);
    const double* wy = clf.params().data() + static_cast<size_t>(y) * fdim;
    const double* wo = clf.params().data() + static_cast<size_t>(1 - y) * fdim;
    auto g = lg.grad.flat();
    for (int j = 0; j < fdim; ++j) {
      EXPECT_NEAR(g[j], (1.0 - lg.prob) * (wy[j] - wo[j]), 1e-12);
    }
  }
}

TEST(Classifier, InputGradientsMatchFiniteDifferences) {
  int instance = 0;
  for (auto kind : {ClassifierKind::SoftmaxLinear, ClassifierKind::SmallDense}) {
    for (auto map : {FeatureMap::RawFlatten, FeatureMap::FcUpperTriangle}) {
      for (int rep = 0; rep < 6; ++rep) {
        Classifier clf(base_config(kind, map));
        randomize(clf, 1000 + instance);
        Rng rng(500 + instance);
        Matrix x = testutil::random_matrix(rng, 4, 10);
        int y = rng.uniform_int(0, 2);
        auto lg = clf.posterior_and_input_grad(x, y);
        EXPECT_NEAR(lg.prob, clf.posterior(x)[y], 1e-12);
        for (int r = 0; r < 4; ++r) {
          for (int c = 0; c < 10; ++c) {
            const double h = 1e-5;
            Matrix xp = x;
            xp(r, c) += h;
            double hi = log_prob(clf, xp, y);
            xp(r, c) -= 2 * h;
            double lo = log_prob(clf, xp, y);
            double fd = (hi - lo) / (2 * h);
            ASSERT_LE(testutil::rel_err(lg.grad(r, c), fd), 1e-4)
                << to_string(kind) << "/" << to_string(map) << " (" << r << "," << c << ")";
          }
        }
        ++instance;
      }
    }
  }
}

TEST(Classifier, UnknownClassIndex) {
  Classifier clf(base_config(ClassifierKind::SoftmaxLinear, FeatureMap::RawFlatten));
  Matrix x(4, 10);
  EXPECT_THROW(clf.posterior_and_input_grad(x, 3), Error);
  EXPECT_THROW(clf.posterior_and_input_grad(x, -1), Error);
}

TEST(Classifier, TrainsOnSeparableFcData) {
  SynthConfig scfg;
  scfg.rows = 6;
  scfg.cols = 48;
  scfg.classes = 2;
  scfg.n_per_class = 40;
  scfg.seed = 5;
  Dataset ds = synth_generate(scfg);

  ClassifierConfig cfg;
  cfg.kind = ClassifierKind::SoftmaxLinear;
  cfg.feature_map = FeatureMap::FcUpperTriangle;
  cfg.classes = 2;
  cfg.rows = 6;
  cfg.cols = 48;
  TrainConfig tcfg;
  tcfg.epochs = 120;
  tcfg.lr = 0.05;

  auto train = ds.split(ds.train_idx);
  Classifier clf = train_classifier(cfg, train, tcfg, 77);
  int correct = 0;
  auto test = ds.split(ds.test_idx);
  for (const auto& s : test) correct += clf.predict(s.values) == *s.label;
  EXPECT_GE(static_cast<double>(correct) / test.size(), 0.95);

  // determinism: identical seed reproduces identical parameters
  Classifier again = train_classifier(cfg, train, tcfg, 77);
  EXPECT_EQ(clf.params(), again.params());
}
