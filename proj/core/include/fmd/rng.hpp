#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "fmd/matrix.hpp"

namespace fmd {

/// splitmix64 mixing step, used to derive independent seeds from a base
/// seed plus a salt. Stable across platforms.
uint64_t mix_seed(uint64_t seed, uint64_t salt);

/// Hash of a short tag, for labelled seed derivation (mix_seed(seed, hash)).
uint64_t tag_hash(std::string_view tag);

/// Deterministic random source. The engine is std::mt19937_64 (its output
/// sequence is pinned by the standard); distributions are implemented here
/// rather than via std:: distribution objects so that streams do not depend
/// on the standard library vendor.
class Rng {
public:
  explicit Rng(uint64_t seed) : engine_(seed), base_(seed) {}

  uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  /// Uniform integer in [lo, hi], inclusive. Rejection sampling.
  int uniform_int(int lo, int hi);

  /// Standard normal via Box-Muller (both values of a pair are consumed).
  double gaussian();

  Matrix gaussian_matrix(int rows, int cols);

  /// Independent stream derived from this stream's seed, regardless of how
  /// many values have been drawn so far.
  Rng derive(uint64_t salt) const { return Rng(mix_seed(base_, salt)); }
  Rng derive(std::string_view tag) const { return derive(tag_hash(tag)); }

  uint64_t seed() const { return base_; }

private:
  std::mt19937_64 engine_;
  uint64_t base_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fmd
