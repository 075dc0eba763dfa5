#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fmd/matrix.hpp"

namespace fmd {

enum class DenoiserArch { Dense, WindowedAttention };

DenoiserArch denoiser_arch_from_string(const std::string& s);
std::string to_string(DenoiserArch a);

struct DenoiserConfig {
  DenoiserArch arch = DenoiserArch::Dense;
  int hidden_dim = 128;
  int time_embed_dim = 16;  // must be even
  int window_len = 8;       // attention only; must divide cols
  int rows = 0;             // R
  int cols = 0;             // L
  int total_steps = 0;      // T, for the t/T time embedding
  uint64_t seed = 0;
};

/// Named slice of the flat parameter vector.
struct ParamSegment {
  std::string name;
  size_t offset = 0;
  size_t size = 0;
};

/// Trainable denoising network D(x_t, t) -> x0_hat.
///
/// Parameters are stored as doubles whose values are always exactly
/// representable in 32-bit floats (enforced at initialization and after
/// every optimizer update); checkpoints store float32 payloads and the
/// save/load roundtrip is bitwise because of this.
class DenoiserNet {
public:
  explicit DenoiserNet(const DenoiserConfig& cfg);
  DenoiserNet(const DenoiserConfig& cfg, std::vector<double> params);

  const DenoiserConfig& config() const { return cfg_; }
  size_t param_count() const { return params_.size(); }
  const std::vector<ParamSegment>& segments() const { return segments_; }
  const ParamSegment& segment(std::string_view name) const;

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

private:
  DenoiserConfig cfg_;
  std::vector<double> params_;
  std::vector<ParamSegment> segments_;
};

/// Sinusoidal embedding of tau = t/T with `dim` channels (dim even):
/// out[2i] = sin(2^i * pi * tau), out[2i+1] = cos(2^i * pi * tau).
std::vector<double> time_embedding(double tau, int dim);

/// Round every entry to the nearest float32 value.
void canonicalize_f32(std::span<double> v);

size_t denoiser_param_count(const DenoiserConfig& cfg);

/// Forward pass. Deterministic given (params, x_t, t); requires the shape
/// from the config, finite input and 1 <= t <= total_steps.
Matrix denoise(const DenoiserNet& net, const Matrix& x_t, int t);

struct BatchItem {
  Matrix x_t;
  int t = 0;
  Matrix target;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> param_grad;   // d loss / d params
  std::vector<Matrix> input_grads;  // d loss / d x_t, one per batch item
};

/// loss = mean over batch of ||D(x_t) - target||^2 / (R*L).
/// Batch items are reduced in index order, so results are deterministic.
LossGrad loss_and_grad(const DenoiserNet& net, std::span<const BatchItem> batch);

/// Deep copy; mutating the clone leaves the source untouched.
DenoiserNet clone_params(const DenoiserNet& net);

/// Attention weights of the windowed-attention forward pass, one row per
/// query position (n_windows * window_len rows of window_len columns).
/// Only valid for the windowed-attention architecture.
Matrix attention_weights(const DenoiserNet& net, const Matrix& x_t, int t);

}  // namespace fmd
