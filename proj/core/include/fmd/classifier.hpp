#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fmd/adam.hpp"
#include "fmd/matrix.hpp"
#include "fmd/schedule.hpp"

namespace fmd {

enum class FeatureMap { RawFlatten, FcUpperTriangle };
enum class ClassifierKind { SoftmaxLinear, SmallDense };

FeatureMap feature_map_from_string(const std::string& s);
ClassifierKind classifier_kind_from_string(const std::string& s);
std::string to_string(FeatureMap m);
std::string to_string(ClassifierKind k);

struct ClassifierConfig {
  ClassifierKind kind = ClassifierKind::SoftmaxLinear;
  FeatureMap feature_map = FeatureMap::FcUpperTriangle;
  int classes = 2;
  int rows = 0;  // expected sample shape
  int cols = 0;
  int hidden_dim = 32;  // small-dense only
  uint64_t seed = 0;
};

/// Differentiable posterior p(y|x) over class labels. Evaluation is pure;
/// the posterior is a proper probability vector (entries >= 0, sum 1).
class Classifier {
public:
  explicit Classifier(const ClassifierConfig& cfg);
  Classifier(const ClassifierConfig& cfg, std::vector<double> params);

  const ClassifierConfig& config() const { return cfg_; }
  int feature_dim() const;
  size_t param_count() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  std::vector<double> posterior(const Matrix& x) const;
  int predict(const Matrix& x) const;

  struct LogProbGrad {
    double prob = 0.0;  // p(y|x)
    Matrix grad;        // d log p(y|x) / dx
  };
  /// For softmax-linear over features phi(x) the input gradient is
  /// J_phi(x)^T (w_y - sum_c p(c|x) w_c); the small-dense head backpropagates
  /// to the features first. Throws for an unknown class index.
  LogProbGrad posterior_and_input_grad(const Matrix& x, int y) const;

  std::vector<double> features(const Matrix& x) const;
  std::vector<double> logits(std::span<const double> feat) const;

private:
  ClassifierConfig cfg_;
  std::vector<double> params_;

  void check_input(const Matrix& x) const;
};

/// Cross-entropy training with Adam over the labelled samples. Deterministic
/// for a fixed seed; samples without a label are rejected.
Classifier train_classifier(const ClassifierConfig& cfg, std::span<const Sample> data,
                            const TrainConfig& tcfg, uint64_t seed);

}  // namespace fmd
