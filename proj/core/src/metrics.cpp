#include "fmd/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "fmd/adam.hpp"
#include "fmd/error.hpp"
#include "fmd/rng.hpp"

namespace fmd {

double proximity(const Matrix& x, const Matrix& xc) {
  check_same_shape(x, xc, "proximity");
  double ss = 0.0;
  auto a = x.flat(), b = xc.flat();
  for (size_t i = 0; i < a.size(); ++i) {
    double d = b[i] - a[i];
    ss += d * d;
  }
  return 100.0 * ss / x.size();
}

double proximity_l2(const Matrix& x, const Matrix& xc) {
  return 100.0 * std::sqrt(proximity(x, xc) / 100.0);
}

double sparsity(const Matrix& x, const Matrix& xc, std::span<const double> sigma_f) {
  check_same_shape(x, xc, "sparsity");
  size_t n = static_cast<size_t>(x.size());
  require(sigma_f.size() == n || sigma_f.size() == 1, "shape_mismatch",
          "sparsity: threshold must have R*L entries or be a scalar");
  auto a = x.flat(), b = xc.flat();
  long altered = 0;
  for (size_t i = 0; i < n; ++i) {
    double thr = sigma_f.size() == 1 ? sigma_f[0] : sigma_f[i];
    if (std::abs(b[i] - a[i]) > thr) ++altered;
  }
  return 100.0 * static_cast<double>(altered) / static_cast<double>(n);
}

namespace {

void mean_and_cov_diag(std::span<const std::vector<double>> pop, std::vector<double>& mu,
                       std::vector<double>& var) {
  size_t n = pop.size(), d = pop.front().size();
  mu.assign(d, 0.0);
  var.assign(d, 0.0);
  for (const auto& v : pop) {
    for (size_t j = 0; j < d; ++j) mu[j] += v[j];
  }
  for (double& m : mu) m /= static_cast<double>(n);
  for (const auto& v : pop) {
    for (size_t j = 0; j < d; ++j) {
      double c = v[j] - mu[j];
      var[j] += c * c;
    }
  }
  for (double& x : var) x /= static_cast<double>(n - 1);
}

Eigen::MatrixXd full_cov(std::span<const std::vector<double>> pop, const std::vector<double>& mu) {
  size_t n = pop.size(), d = pop.front().size();
  Eigen::MatrixXd centered(n, d);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < d; ++j) centered(i, j) = pop[i][j] - mu[j];
  }
  return centered.transpose() * centered / static_cast<double>(n - 1);
}

}  // namespace

double frechet_distance(std::span<const std::vector<double>> a,
                        std::span<const std::vector<double>> b, CovMode mode, int* floored) {
  require(a.size() >= 2 && b.size() >= 2, "invalid_argument",
          "frechet_distance: each population needs at least 2 vectors");
  size_t d = a.front().size();
  for (const auto& v : a) {
    require(v.size() == d, "shape_mismatch", "frechet_distance: ragged population A");
  }
  for (const auto& v : b) {
    require(v.size() == d, "shape_mismatch", "frechet_distance: dimension mismatch");
  }
  if (floored) *floored = 0;

  std::vector<double> mu_a, var_a, mu_b, var_b;
  mean_and_cov_diag(a, mu_a, var_a);
  mean_and_cov_diag(b, mu_b, var_b);
  double mean_term = 0.0;
  for (size_t j = 0; j < d; ++j) {
    double c = mu_a[j] - mu_b[j];
    mean_term += c * c;
  }

  if (mode == CovMode::Diagonal) {
    double tr = 0.0;
    for (size_t j = 0; j < d; ++j) {
      double c = std::sqrt(std::max(var_a[j], 0.0)) - std::sqrt(std::max(var_b[j], 0.0));
      tr += c * c;
    }
    return mean_term + tr;
  }

  Eigen::MatrixXd sa = full_cov(a, mu_a);
  Eigen::MatrixXd sb = full_cov(b, mu_b);
  // Tr((Sa Sb)^{1/2}) = Tr((Sa^{1/2} Sb Sa^{1/2})^{1/2}), computed through
  // symmetric eigendecompositions with a zero floor on eigenvalues.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_a(sa);
  Eigen::VectorXd ev_a = es_a.eigenvalues();
  for (int i = 0; i < ev_a.size(); ++i) {
    if (ev_a(i) < 0.0) {
      ev_a(i) = 0.0;
      if (floored) ++(*floored);
    }
  }
  Eigen::MatrixXd root_a =
      es_a.eigenvectors() * ev_a.cwiseSqrt().asDiagonal() * es_a.eigenvectors().transpose();
  Eigen::MatrixXd inner = root_a * sb * root_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_i(inner);
  double tr_cross = 0.0;
  for (int i = 0; i < es_i.eigenvalues().size(); ++i) {
    double ev = es_i.eigenvalues()(i);
    if (ev < 0.0) {
      ev = 0.0;
      if (floored) ++(*floored);
    }
    tr_cross += std::sqrt(ev);
  }
  return mean_term + sa.trace() + sb.trace() - 2.0 * tr_cross;
}

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  require(!a.empty() && !b.empty(), "invalid_argument", "wasserstein_1d: empty input");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  size_t n = a.size(), m = b.size();
  if (n == m) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += std::abs(a[i] - b[i]);
    return acc / static_cast<double>(n);
  }
  // integrate |Fa^{-1}(q) - Fb^{-1}(q)| dq over the merged quantile grid
  double acc = 0.0, q_prev = 0.0;
  size_t ia = 0, ib = 0;
  while (ia < n && ib < m) {
    double qa = static_cast<double>(ia + 1) / n;
    double qb = static_cast<double>(ib + 1) / m;
    double q = std::min(qa, qb);
    acc += (q - q_prev) * std::abs(a[ia] - b[ib]);
    q_prev = q;
    if (qa <= q + 1e-15) ++ia;
    if (qb <= q + 1e-15) ++ib;
  }
  return acc;
}

double flip_rate(std::span<const CounterfactualResult> results, const Classifier& clf,
                 int* classes_counted) {
  require(!results.empty(), "invalid_argument", "flip_rate: no results");
  std::map<int, std::pair<long, long>> per_class;  // target -> (hits, total)
  for (const auto& r : results) {
    auto& e = per_class[r.target];
    e.second += 1;
    if (clf.predict(r.counterfactual.values) == r.target) e.first += 1;
  }
  double acc = 0.0;
  for (const auto& [cls, e] : per_class) acc += static_cast<double>(e.first) / e.second;
  if (classes_counted) *classes_counted = static_cast<int>(per_class.size());
  return acc / static_cast<double>(per_class.size());
}

std::vector<BiomarkerFeature> biomarker_map(std::span<const std::pair<Sample, Sample>> pairs,
                                            double top_pct) {
  require(!pairs.empty(), "invalid_argument", "biomarker_map: no pairs");
  require(top_pct > 0.0 && top_pct <= 100.0, "invalid_argument",
          "biomarker_map: top_pct must lie in (0, 100]");
  int R = pairs.front().first.values.rows();
  int nf = fc_feature_count(R);
  std::vector<double> score(nf, 0.0);
  for (const auto& [orig, cf] : pairs) {
    auto fo = fc_upper(orig.values);
    auto fc = fc_upper(cf.values);
    for (int f = 0; f < nf; ++f) score[f] += std::abs(fc[f] - fo[f]);
  }
  for (double& s : score) s /= static_cast<double>(pairs.size());

  std::vector<int> order(nf);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return score[x] > score[y]; });
  int keep = static_cast<int>(std::ceil(top_pct / 100.0 * nf));
  keep = std::min(keep, nf);
  // include ties with the last kept score
  double cut = score[order[keep - 1]];
  while (keep < nf && score[order[keep]] == cut) ++keep;

  std::vector<BiomarkerFeature> out;
  out.reserve(keep);
  for (int q = 0; q < keep; ++q) {
    int f = order[q];
    // invert the flattened upper-triangle index
    int i = 0, rem = f;
    while (rem >= R - 1 - i) {
      rem -= R - 1 - i;
      ++i;
    }
    out.push_back({i, i + 1 + rem, score[f]});
  }
  return out;
}

ProbeResult logistic_probe(std::span<const LabelledFeatures> train,
                           std::span<const LabelledFeatures> test, const TrainConfig& cfg,
                           uint64_t seed) {
  require(!train.empty() && !test.empty(), "invalid_argument", "logistic_probe: empty split");
  int fd = static_cast<int>(train.front().first.size());
  int classes = 0;
  std::vector<bool> seen;
  for (const auto& [feat, label] : train) {
    require(static_cast<int>(feat.size()) == fd, "shape_mismatch", "logistic_probe: ragged features");
    require(label >= 0, "invalid_argument", "logistic_probe: negative label");
    classes = std::max(classes, label + 1);
  }
  seen.assign(classes, false);
  for (const auto& [feat, label] : train) seen[label] = true;
  int present = static_cast<int>(std::count(seen.begin(), seen.end(), true));
  require(present >= 2, "invalid_argument", "logistic_probe: train split has a single class");

  std::vector<double> w(static_cast<size_t>(classes) * fd + classes, 0.0);
  AdamState state(w.size());
  std::vector<double> grad(w.size());
  Rng rng = Rng(seed).derive("probe-shuffle");
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  int n = static_cast<int>(train.size());
  int bsz = std::min<int>(cfg.batch, n);

  auto logits_of = [&](std::span<const double> feat, std::vector<double>& out) {
    const double* wm = w.data();
    const double* b = w.data() + static_cast<size_t>(classes) * fd;
    out.resize(classes);
    for (int c = 0; c < classes; ++c) {
      double acc = b[c];
      const double* row = wm + static_cast<size_t>(c) * fd;
      for (int j = 0; j < fd; ++j) acc += row[j] * feat[j];
      out[c] = acc;
    }
  };
  auto soft = [](std::vector<double>& v) {
    double mx = *std::max_element(v.begin(), v.end());
    double z = 0.0;
    for (double& x : v) {
      x = std::exp(x - mx);
      z += x;
    }
    for (double& x : v) x /= z;
  };

  std::vector<double> p;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
    for (int start = 0; start < n; start += bsz) {
      int end = std::min(start + bsz, n);
      std::fill(grad.begin(), grad.end(), 0.0);
      double inv = 1.0 / (end - start);
      for (int q = start; q < end; ++q) {
        const auto& [feat, y] = train[order[q]];
        logits_of(feat, p);
        soft(p);
        double* gw = grad.data();
        double* gb = grad.data() + static_cast<size_t>(classes) * fd;
        for (int c = 0; c < classes; ++c) {
          double dl = (p[c] - (c == y ? 1.0 : 0.0)) * inv;
          gb[c] += dl;
          double* grow = gw + static_cast<size_t>(c) * fd;
          for (int j = 0; j < fd; ++j) grow[j] += dl * feat[j];
        }
      }
      adam_step(state, w, grad, cfg);
    }
  }

  // score on the test split
  std::vector<long> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  long correct = 0;
  for (const auto& [feat, y] : test) {
    require(static_cast<int>(feat.size()) == fd, "shape_mismatch", "logistic_probe: ragged test features");
    logits_of(feat, p);
    int pred = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    if (pred == y) {
      ++correct;
      ++tp[y];
    } else {
      if (y < classes) ++fn[y];
      ++fp[pred];
    }
  }
  ProbeResult res;
  res.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  double f1_sum = 0.0;
  int f1_classes = 0;
  for (int c = 0; c < classes; ++c) {
    if (!seen[c]) continue;
    ++f1_classes;
    double denom = 2.0 * tp[c] + fp[c] + fn[c];
    f1_sum += denom > 0.0 ? 2.0 * tp[c] / denom : 0.0;
  }
  res.macro_f1 = f1_sum / f1_classes;
  return res;
}

MetricsReport evaluate_results(std::span<const CounterfactualResult> results,
                               const Classifier& clf, std::span<const double> sigma_f,
                               FeatureMap fid_features, CovMode mode) {
  require(!results.empty(), "invalid_argument", "evaluate_results: no results");
  MetricsReport rep;
  rep.n = static_cast<int>(results.size());
  rep.feature_map = to_string(fid_features);

  std::vector<std::vector<double>> feat_orig, feat_cf;
  std::vector<double> fc_pool_orig, fc_pool_cf;
  for (const auto& r : results) {
    rep.proximity += proximity(r.original.values, r.counterfactual.values);
    rep.proximity_l2 += proximity_l2(r.original.values, r.counterfactual.values);
    rep.sparsity += sparsity(r.original.values, r.counterfactual.values, sigma_f);
    auto fo = fc_upper(r.original.values);
    auto fc = fc_upper(r.counterfactual.values);
    fc_pool_orig.insert(fc_pool_orig.end(), fo.begin(), fo.end());
    fc_pool_cf.insert(fc_pool_cf.end(), fc.begin(), fc.end());
    if (fid_features == FeatureMap::FcUpperTriangle) {
      feat_orig.push_back(std::move(fo));
      feat_cf.push_back(std::move(fc));
    } else {
      feat_orig.emplace_back(r.original.values.flat().begin(), r.original.values.flat().end());
      feat_cf.emplace_back(r.counterfactual.values.flat().begin(),
                           r.counterfactual.values.flat().end());
    }
  }
  rep.proximity /= rep.n;
  rep.proximity_l2 /= rep.n;
  rep.sparsity /= rep.n;
  rep.frechet = rep.n >= 2
                    ? frechet_distance(feat_orig, feat_cf, mode, &rep.frechet_floored)
                    : 0.0;
  rep.wasserstein_fc = wasserstein_1d(fc_pool_orig, fc_pool_cf);
  rep.flip_rate = flip_rate(results, clf, &rep.flip_classes_counted);
  return rep;
}

}  // namespace fmd
