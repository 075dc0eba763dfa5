#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fmd/matrix.hpp"
#include "fmd/schedule.hpp"

namespace fmd {

/// One correlated block of a class's FC template: regions
/// [first, first+count) share correlation rho.
struct FcBlock {
  int first = 0;
  int count = 0;
  double rho = 0.8;
};

struct SynthConfig {
  int rows = 8;
  int cols = 64;
  int classes = 2;
  int n_per_class = 200;
  uint64_t seed = 0;
  /// Per-class block templates. Empty means the default layout: the regions
  /// are divided into `classes` equal contiguous groups and class c gets one
  /// block over group c with correlation default_rho.
  std::vector<std::vector<FcBlock>> class_blocks;
  double default_rho = 0.8;
  /// Extra white noise added to every region; within-block correlation
  /// becomes rho / (1 + noise_std^2).
  double noise_std = 0.0;
};

struct Normalization {
  std::vector<double> mean;  // per feature (r, l), row-major
  std::vector<double> stddev;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<int> train_idx, val_idx, test_idx;
  std::optional<Normalization> normalization;  // set once zscore() ran
  int classes = 0;

  std::vector<Sample> split(std::span<const int> idx) const;
};

/// Class-conditional synthetic time series whose empirical FC approximates
/// each class's block template (block covariance sampled through a Cholesky
/// factor). Splits are a seeded shuffle cut 80/10/10. Deterministic per seed.
Dataset synth_generate(const SynthConfig& cfg);

/// Per-feature z-scoring with statistics from the train split only; all
/// splits are normalized with those statistics and they are stored for exact
/// inversion. Constant features keep std pinned to 1 (a warning is recorded
/// in `warnings` when given).
Dataset zscore(Dataset ds, std::vector<std::string>* warnings = nullptr);

Matrix apply_normalization(const Matrix& x, const Normalization& n);
Matrix invert_normalization(const Matrix& z, const Normalization& n);

/// Per-feature standard deviation over a set of samples (population
/// convention), the default sparsity threshold.
std::vector<double> feature_std(std::span<const Sample> samples);

/// Sample files are CSV: '#'-prefixed header lines carry id and (optionally)
/// label, then R rows of L comma-separated values at full double precision.
/// One file per sample by convention, but a file may hold several samples
/// (each opened by its header lines) and an empty file holds none.
void write_sample_csv(const Sample& s, const std::filesystem::path& path);
std::vector<Sample> read_samples_csv(const std::filesystem::path& path);

/// Reads samples from a CSV file, a manifest JSON, or a directory (which is
/// scanned via its manifest.json when present, otherwise *.csv in name order).
std::vector<Sample> read_samples(const std::filesystem::path& path);

/// Dataset directory layout: manifest.json plus samples/sNNNNN.csv files.
/// write refuses to overwrite an existing manifest unless force is set.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir, bool force = false);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace fmd
