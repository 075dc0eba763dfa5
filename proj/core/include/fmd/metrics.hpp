#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fmd/classifier.hpp"
#include "fmd/counterfactual.hpp"
#include "fmd/fc.hpp"
#include "fmd/matrix.hpp"

namespace fmd {

/// 100 * ||xc - x||_2^2 / (R*L).
double proximity(const Matrix& x, const Matrix& xc);

/// Unsquared variant: 100 * ||xc - x||_2 / sqrt(R*L).
double proximity_l2(const Matrix& x, const Matrix& xc);

/// Percentage of features with |xc - x| strictly above the per-feature
/// threshold. sigma_f has R*L entries or a single broadcast value.
double sparsity(const Matrix& x, const Matrix& xc, std::span<const double> sigma_f);

enum class CovMode { Diagonal, Full };

/// Frechet distance between Gaussian fits of two feature-vector populations:
///   ||mu_A - mu_B||^2 + Tr(S_A + S_B - 2 (S_A S_B)^{1/2}).
/// Diagonal mode replaces the trace term with sum_i (sqrt(a_i) - sqrt(b_i))^2.
/// Covariances use the 1/(n-1) convention. Numerically negative eigenvalues
/// in full mode are floored at zero; `floored` (optional) counts them.
double frechet_distance(std::span<const std::vector<double>> a,
                        std::span<const std::vector<double>> b, CovMode mode,
                        int* floored = nullptr);

/// Exact W1 between empirical distributions (quantile coupling). For equal
/// sizes this is mean |sorted(a)_i - sorted(b)_i|; unequal sizes integrate
/// the two quantile step functions over a merged grid.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

/// FR = (1/C') sum over target classes of the fraction of counterfactuals
/// whose classifier argmax hits the target; classes that were never targeted
/// are excluded (C' counts the rest, reported via classes_counted).
double flip_rate(std::span<const CounterfactualResult> results, const Classifier& clf,
                 int* classes_counted = nullptr);

struct BiomarkerFeature {
  int i = 0;
  int j = 0;        // upper-triangle region pair, i < j
  double score = 0; // mean |FC(xc) - FC(x)| over pairs
};

/// FC-difference features at or above the (100 - top_pct) percentile,
/// ranked by score (descending). Ties at the cut are included.
std::vector<BiomarkerFeature> biomarker_map(
    std::span<const std::pair<Sample, Sample>> pairs, double top_pct);

struct ProbeResult {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

using LabelledFeatures = std::pair<std::vector<double>, int>;

/// Multinomial logistic regression trained with Adam on the train pairs,
/// scored on the test pairs. Macro-F1 averages per-class F1 over all classes
/// present in the training set (F1 = 0 when a class has no true or predicted
/// instances).
ProbeResult logistic_probe(std::span<const LabelledFeatures> train,
                           std::span<const LabelledFeatures> test, const TrainConfig& cfg,
                           uint64_t seed);

struct MetricsReport {
  double proximity = 0.0;       // mean over pairs
  double proximity_l2 = 0.0;    // mean of the unsquared variant
  double sparsity = 0.0;        // mean over pairs, percent
  double frechet = 0.0;         // between the two populations' feature vectors
  double wasserstein_fc = 0.0;  // between pooled FC upper-triangle values
  double flip_rate = 0.0;
  int n = 0;
  std::string feature_map;  // feature map used for the Frechet distance
  int flip_classes_counted = 0;
  int frechet_floored = 0;
};

/// Batch aggregation used by the evaluate command. sigma_f as in sparsity().
MetricsReport evaluate_results(std::span<const CounterfactualResult> results,
                               const Classifier& clf, std::span<const double> sigma_f,
                               FeatureMap fid_features = FeatureMap::FcUpperTriangle,
                               CovMode mode = CovMode::Full);

}  // namespace fmd
