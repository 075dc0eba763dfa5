#include "fmd/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fmd/denoiser.hpp"  // canonicalize_f32
#include "fmd/error.hpp"
#include "fmd/fc.hpp"
#include "fmd/rng.hpp"

namespace fmd {

FeatureMap feature_map_from_string(const std::string& s) {
  if (s == "raw-flatten") return FeatureMap::RawFlatten;
  if (s == "fc-features") return FeatureMap::FcUpperTriangle;
  fail("invalid_argument", "unknown feature map '" + s + "' (expected raw-flatten | fc-features)");
}

ClassifierKind classifier_kind_from_string(const std::string& s) {
  if (s == "softmax-linear") return ClassifierKind::SoftmaxLinear;
  if (s == "small-dense") return ClassifierKind::SmallDense;
  fail("invalid_argument", "unknown classifier kind '" + s + "' (expected softmax-linear | small-dense)");
}

std::string to_string(FeatureMap m) {
  return m == FeatureMap::RawFlatten ? "raw-flatten" : "fc-features";
}

std::string to_string(ClassifierKind k) {
  return k == ClassifierKind::SoftmaxLinear ? "softmax-linear" : "small-dense";
}

namespace {

inline double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }
inline double silu(double u) { return u * logistic(u); }
inline double silu_deriv(double u) {
  double s = logistic(u);
  return s * (1.0 + u * (1.0 - s));
}

void validate(const ClassifierConfig& cfg) {
  require(cfg.classes >= 2, "invalid_config", "classifier needs at least 2 classes");
  require(cfg.rows >= 1 && cfg.cols >= 1, "invalid_config", "classifier input shape must be set");
  if (cfg.feature_map == FeatureMap::FcUpperTriangle) {
    require(cfg.rows >= 2 && cfg.cols >= 2, "invalid_config",
            "fc-features need at least 2 regions and 2 timepoints");
  }
  if (cfg.kind == ClassifierKind::SmallDense) {
    require(cfg.hidden_dim >= 1, "invalid_config", "hidden_dim must be >= 1");
  }
}

size_t expected_param_count(const ClassifierConfig& cfg, int fdim) {
  if (cfg.kind == ClassifierKind::SoftmaxLinear) {
    return static_cast<size_t>(cfg.classes) * fdim + cfg.classes;
  }
  return static_cast<size_t>(cfg.hidden_dim) * fdim + cfg.hidden_dim +
         static_cast<size_t>(cfg.classes) * cfg.hidden_dim + cfg.classes;
}

std::vector<double> softmax(std::vector<double> logits) {
  double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : logits) v /= z;
  return logits;
}

}  // namespace

Classifier::Classifier(const ClassifierConfig& cfg) : cfg_(cfg) {
  validate(cfg_);
  int fdim = feature_dim();
  params_.assign(expected_param_count(cfg_, fdim), 0.0);
  if (cfg_.kind == ClassifierKind::SmallDense) {
    Rng root(cfg_.seed);
    double a1 = std::sqrt(6.0 / (fdim + cfg_.hidden_dim));
    double a2 = std::sqrt(6.0 / (cfg_.hidden_dim + cfg_.classes));
    Rng r1 = root.derive("w1");
    size_t n1 = static_cast<size_t>(cfg_.hidden_dim) * fdim;
    for (size_t i = 0; i < n1; ++i) params_[i] = r1.uniform(-a1, a1);
    Rng r2 = root.derive("w2");
    size_t off2 = n1 + cfg_.hidden_dim;
    size_t n2 = static_cast<size_t>(cfg_.classes) * cfg_.hidden_dim;
    for (size_t i = 0; i < n2; ++i) params_[off2 + i] = r2.uniform(-a2, a2);
  }
  canonicalize_f32(params_);
}

Classifier::Classifier(const ClassifierConfig& cfg, std::vector<double> params) : cfg_(cfg) {
  validate(cfg_);
  require(params.size() == expected_param_count(cfg_, feature_dim()), "invalid_argument",
          "classifier parameter vector size does not match config");
  params_ = std::move(params);
}

int Classifier::feature_dim() const {
  return cfg_.feature_map == FeatureMap::RawFlatten ? cfg_.rows * cfg_.cols
                                                    : fc_feature_count(cfg_.rows);
}

void Classifier::check_input(const Matrix& x) const {
  require(x.rows() == cfg_.rows && x.cols() == cfg_.cols, "shape_mismatch",
          "classifier input shape mismatch");
  require(x.all_finite(), "invalid_argument", "classifier input must be finite");
}

std::vector<double> Classifier::features(const Matrix& x) const {
  if (cfg_.feature_map == FeatureMap::RawFlatten) {
    return std::vector<double>(x.flat().begin(), x.flat().end());
  }
  return fc_upper(x);
}

std::vector<double> Classifier::logits(std::span<const double> feat) const {
  int fdim = feature_dim();
  if (cfg_.kind == ClassifierKind::SoftmaxLinear) {
    const double* w = params_.data();
    const double* b = params_.data() + static_cast<size_t>(cfg_.classes) * fdim;
    std::vector<double> out(cfg_.classes);
    for (int c = 0; c < cfg_.classes; ++c) {
      double acc = b[c];
      const double* row = w + static_cast<size_t>(c) * fdim;
      for (int j = 0; j < fdim; ++j) acc += row[j] * feat[j];
      out[c] = acc;
    }
    return out;
  }
  int h = cfg_.hidden_dim;
  const double* w1 = params_.data();
  const double* b1 = w1 + static_cast<size_t>(h) * fdim;
  const double* w2 = b1 + h;
  const double* b2 = w2 + static_cast<size_t>(cfg_.classes) * h;
  std::vector<double> hid(h);
  for (int i = 0; i < h; ++i) {
    double acc = b1[i];
    const double* row = w1 + static_cast<size_t>(i) * fdim;
    for (int j = 0; j < fdim; ++j) acc += row[j] * feat[j];
    hid[i] = silu(acc);
  }
  std::vector<double> out(cfg_.classes);
  for (int c = 0; c < cfg_.classes; ++c) {
    double acc = b2[c];
    const double* row = w2 + static_cast<size_t>(c) * h;
    for (int j = 0; j < h; ++j) acc += row[j] * hid[j];
    out[c] = acc;
  }
  return out;
}

std::vector<double> Classifier::posterior(const Matrix& x) const {
  check_input(x);
  return softmax(logits(features(x)));
}

int Classifier::predict(const Matrix& x) const {
  auto p = posterior(x);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

Classifier::LogProbGrad Classifier::posterior_and_input_grad(const Matrix& x, int y) const {
  check_input(x);
  require(y >= 0 && y < cfg_.classes, "invalid_argument",
          "class index " + std::to_string(y) + " out of range");
  auto feat = features(x);
  int fdim = feature_dim();

  std::vector<double> gfeat(fdim, 0.0);
  double prob = 0.0;
  if (cfg_.kind == ClassifierKind::SoftmaxLinear) {
    auto p = softmax(logits(feat));
    prob = p[y];
    const double* w = params_.data();
    // d log p(y) / d feat = w_y - sum_c p_c w_c
    for (int c = 0; c < cfg_.classes; ++c) {
      double coef = (c == y ? 1.0 : 0.0) - p[c];
      const double* row = w + static_cast<size_t>(c) * fdim;
      for (int j = 0; j < fdim; ++j) gfeat[j] += coef * row[j];
    }
  } else {
    int h = cfg_.hidden_dim;
    const double* w1 = params_.data();
    const double* b1 = w1 + static_cast<size_t>(h) * fdim;
    const double* w2 = b1 + h;
    const double* b2 = w2 + static_cast<size_t>(cfg_.classes) * h;
    std::vector<double> pre(h), hid(h);
    for (int i = 0; i < h; ++i) {
      double acc = b1[i];
      const double* row = w1 + static_cast<size_t>(i) * fdim;
      for (int j = 0; j < fdim; ++j) acc += row[j] * feat[j];
      pre[i] = acc;
      hid[i] = silu(acc);
    }
    std::vector<double> lg(cfg_.classes);
    for (int c = 0; c < cfg_.classes; ++c) {
      double acc = b2[c];
      const double* row = w2 + static_cast<size_t>(c) * h;
      for (int j = 0; j < h; ++j) acc += row[j] * hid[j];
      lg[c] = acc;
    }
    auto p = softmax(lg);
    prob = p[y];
    std::vector<double> dhid(h, 0.0);
    for (int c = 0; c < cfg_.classes; ++c) {
      double coef = (c == y ? 1.0 : 0.0) - p[c];
      const double* row = w2 + static_cast<size_t>(c) * h;
      for (int j = 0; j < h; ++j) dhid[j] += coef * row[j];
    }
    for (int i = 0; i < h; ++i) {
      double d = dhid[i] * silu_deriv(pre[i]);
      const double* row = w1 + static_cast<size_t>(i) * fdim;
      for (int j = 0; j < fdim; ++j) gfeat[j] += d * row[j];
    }
  }

  LogProbGrad out;
  out.prob = prob;
  if (cfg_.feature_map == FeatureMap::RawFlatten) {
    out.grad = Matrix(cfg_.rows, cfg_.cols);
    std::copy(gfeat.begin(), gfeat.end(), out.grad.flat().begin());
  } else {
    out.grad = fc_upper_vjp(x, gfeat);
  }
  return out;
}

Classifier train_classifier(const ClassifierConfig& cfg, std::span<const Sample> data,
                            const TrainConfig& tcfg, uint64_t seed) {
  require(!data.empty(), "invalid_argument", "train_classifier: empty dataset");
  Classifier clf(cfg);
  int fdim = clf.feature_dim();

  std::vector<std::vector<double>> feats;
  std::vector<int> labels;
  feats.reserve(data.size());
  for (const auto& s : data) {
    require(s.label.has_value(), "invalid_argument",
            "train_classifier: sample '" + s.id + "' has no label");
    require(*s.label >= 0 && *s.label < cfg.classes, "invalid_argument",
            "train_classifier: label out of range for sample '" + s.id + "'");
    feats.push_back(clf.features(s.values));
    labels.push_back(*s.label);
  }

  AdamState state(clf.param_count());
  Rng shuffle_rng = Rng(seed).derive("classifier-shuffle");
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  int n = static_cast<int>(data.size());
  int bsz = std::min<int>(tcfg.batch, n);
  std::vector<double> grad(clf.param_count());
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    // Fisher-Yates with our own rng for a reproducible order.
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);
    for (int start = 0; start < n; start += bsz) {
      int end = std::min(start + bsz, n);
      std::fill(grad.begin(), grad.end(), 0.0);
      double inv = 1.0 / (end - start);
      for (int q = start; q < end; ++q) {
        int idx = order[q];
        const auto& feat = feats[idx];
        int y = labels[idx];
        if (cfg.kind == ClassifierKind::SoftmaxLinear) {
          auto p = softmax(clf.logits(feat));
          double* gw = grad.data();
          double* gb = grad.data() + static_cast<size_t>(cfg.classes) * fdim;
          for (int c = 0; c < cfg.classes; ++c) {
            double dl = (p[c] - (c == y ? 1.0 : 0.0)) * inv;
            gb[c] += dl;
            double* grow = gw + static_cast<size_t>(c) * fdim;
            for (int j = 0; j < fdim; ++j) grow[j] += dl * feat[j];
          }
        } else {
          int h = cfg.hidden_dim;
          const double* w1 = clf.params().data();
          const double* b1 = w1 + static_cast<size_t>(h) * fdim;
          const double* w2 = b1 + h;
          const double* b2 = w2 + static_cast<size_t>(cfg.classes) * h;
          std::vector<double> pre(h), hid(h);
          for (int i = 0; i < h; ++i) {
            double acc = b1[i];
            const double* row = w1 + static_cast<size_t>(i) * fdim;
            for (int j = 0; j < fdim; ++j) acc += row[j] * feat[j];
            pre[i] = acc;
            hid[i] = silu(acc);
          }
          std::vector<double> lg(cfg.classes);
          for (int c = 0; c < cfg.classes; ++c) {
            double acc = b2[c];
            const double* row = w2 + static_cast<size_t>(c) * h;
            for (int j = 0; j < h; ++j) acc += row[j] * hid[j];
            lg[c] = acc;
          }
          auto p = softmax(lg);
          double* g_w1 = grad.data();
          double* g_b1 = g_w1 + static_cast<size_t>(h) * fdim;
          double* g_w2 = g_b1 + h;
          double* g_b2 = g_w2 + static_cast<size_t>(cfg.classes) * h;
          std::vector<double> dhid(h, 0.0);
          for (int c = 0; c < cfg.classes; ++c) {
            double dl = (p[c] - (c == y ? 1.0 : 0.0)) * inv;
            g_b2[c] += dl;
            double* grow = g_w2 + static_cast<size_t>(c) * h;
            const double* row = w2 + static_cast<size_t>(c) * h;
            for (int j = 0; j < h; ++j) {
              grow[j] += dl * hid[j];
              dhid[j] += row[j] * dl;
            }
          }
          for (int i = 0; i < h; ++i) {
            double d = dhid[i] * silu_deriv(pre[i]);
            g_b1[i] += d;
            double* grow = g_w1 + static_cast<size_t>(i) * fdim;
            for (int j = 0; j < fdim; ++j) grow[j] += d * feat[j];
          }
        }
      }
      adam_step(state, clf.params(), grad, tcfg);
      canonicalize_f32(clf.params());
    }
  }
  return clf;
}

}  // namespace fmd
