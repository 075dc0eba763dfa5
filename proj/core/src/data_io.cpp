#include "fmd/data_io.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "fmd/error.hpp"
#include "fmd/rng.hpp"

namespace fmd {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<Sample> Dataset::split(std::span<const int> idx) const {
  std::vector<Sample> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(samples[i]);
  return out;
}

namespace {

std::vector<std::vector<FcBlock>> resolve_blocks(const SynthConfig& cfg) {
  if (!cfg.class_blocks.empty()) {
    require(static_cast<int>(cfg.class_blocks.size()) == cfg.classes, "invalid_config",
            "class_blocks must have one entry per class");
    return cfg.class_blocks;
  }
  std::vector<std::vector<FcBlock>> blocks(cfg.classes);
  int group = cfg.rows / cfg.classes;
  require(group >= 2, "invalid_config",
          "default block template needs at least 2 regions per class");
  for (int c = 0; c < cfg.classes; ++c) blocks[c] = {{c * group, group, cfg.default_rho}};
  return blocks;
}

void validate_blocks(const SynthConfig& cfg, const std::vector<std::vector<FcBlock>>& blocks) {
  for (int c = 0; c < cfg.classes; ++c) {
    std::vector<bool> used(cfg.rows, false);
    for (const auto& b : blocks[c]) {
      require(b.count >= 2, "invalid_config", "block needs at least 2 regions");
      require(b.first >= 0 && b.first + b.count <= cfg.rows, "invalid_config",
              "block exceeds the region range");
      require(b.rho > -1.0 && b.rho < 1.0, "invalid_config",
              "block correlation must lie in (-1, 1)");
      for (int r = b.first; r < b.first + b.count; ++r) {
        require(!used[r], "invalid_config", "blocks overlap at region " + std::to_string(r));
        used[r] = true;
      }
    }
  }
}

Eigen::MatrixXd block_chol(int m, double rho) {
  Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(m, m, rho);
  cov.diagonal().setOnes();
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  require(llt.info() == Eigen::Success, "invalid_config",
          "block correlation " + std::to_string(rho) + " is infeasible for " + std::to_string(m) +
              " regions");
  return llt.matrixL();
}

}  // namespace

Dataset synth_generate(const SynthConfig& cfg) {
  require(cfg.rows >= 1 && cfg.cols >= 1, "invalid_config", "synth: shape must be positive");
  require(cfg.classes >= 1 && cfg.n_per_class >= 1, "invalid_config",
          "synth: classes and n_per_class must be positive");
  auto blocks = resolve_blocks(cfg);
  validate_blocks(cfg, blocks);

  Dataset ds;
  ds.classes = cfg.classes;
  int total = cfg.classes * cfg.n_per_class;
  ds.samples.reserve(total);

  Rng root(cfg.seed);
  for (int c = 0; c < cfg.classes; ++c) {
    std::vector<Eigen::MatrixXd> chols;
    std::vector<bool> in_block(cfg.rows, false);
    for (const auto& b : blocks[c]) {
      chols.push_back(block_chol(b.count, b.rho));
      for (int r = b.first; r < b.first + b.count; ++r) in_block[r] = true;
    }
    for (int i = 0; i < cfg.n_per_class; ++i) {
      Rng rng = root.derive("synth-class").derive(static_cast<uint64_t>(c)).derive(
          static_cast<uint64_t>(i));
      Matrix x(cfg.rows, cfg.cols);
      for (size_t bi = 0; bi < blocks[c].size(); ++bi) {
        const auto& b = blocks[c][bi];
        const auto& L = chols[bi];
        Eigen::VectorXd z(b.count);
        for (int l = 0; l < cfg.cols; ++l) {
          for (int r = 0; r < b.count; ++r) z(r) = rng.gaussian();
          Eigen::VectorXd v = L * z;
          for (int r = 0; r < b.count; ++r) x(b.first + r, l) = v(r);
        }
      }
      for (int r = 0; r < cfg.rows; ++r) {
        if (in_block[r]) continue;
        for (int l = 0; l < cfg.cols; ++l) x(r, l) = rng.gaussian();
      }
      if (cfg.noise_std > 0.0) {
        for (int r = 0; r < cfg.rows; ++r) {
          for (int l = 0; l < cfg.cols; ++l) x(r, l) += cfg.noise_std * rng.gaussian();
        }
      }
      Sample s;
      s.values = std::move(x);
      s.label = c;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "synth-c%d-%05d", c, i);
      s.id = buf;
      ds.samples.push_back(std::move(s));
    }
  }

  // seeded shuffle, then 80/10/10 slices
  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle = root.derive("split");
  for (int i = total - 1; i > 0; --i) std::swap(order[i], order[shuffle.uniform_int(0, i)]);
  int n_train = static_cast<int>(std::floor(0.8 * total));
  int n_val = static_cast<int>(std::floor(0.1 * total));
  ds.train_idx.assign(order.begin(), order.begin() + n_train);
  ds.val_idx.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  ds.test_idx.assign(order.begin() + n_train + n_val, order.end());
  return ds;
}

std::vector<double> feature_std(std::span<const Sample> samples) {
  require(!samples.empty(), "invalid_argument", "feature_std: no samples");
  size_t m = static_cast<size_t>(samples.front().values.size());
  std::vector<double> mean(m, 0.0), var(m, 0.0);
  for (const auto& s : samples) {
    require(static_cast<size_t>(s.values.size()) == m, "shape_mismatch",
            "feature_std: inconsistent sample shapes");
    auto v = s.values.flat();
    for (size_t i = 0; i < m; ++i) mean[i] += v[i];
  }
  for (double& x : mean) x /= static_cast<double>(samples.size());
  for (const auto& s : samples) {
    auto v = s.values.flat();
    for (size_t i = 0; i < m; ++i) {
      double d = v[i] - mean[i];
      var[i] += d * d;
    }
  }
  std::vector<double> out(m);
  for (size_t i = 0; i < m; ++i) out[i] = std::sqrt(var[i] / static_cast<double>(samples.size()));
  return out;
}

Dataset zscore(Dataset ds, std::vector<std::string>* warnings) {
  require(!ds.train_idx.empty(), "invalid_argument", "zscore: train split is empty");
  size_t m = static_cast<size_t>(ds.samples.at(ds.train_idx.front()).values.size());

  Normalization norm;
  norm.mean.assign(m, 0.0);
  norm.stddev.assign(m, 0.0);
  for (int idx : ds.train_idx) {
    auto v = ds.samples[idx].values.flat();
    for (size_t i = 0; i < m; ++i) norm.mean[i] += v[i];
  }
  for (double& x : norm.mean) x /= static_cast<double>(ds.train_idx.size());
  for (int idx : ds.train_idx) {
    auto v = ds.samples[idx].values.flat();
    for (size_t i = 0; i < m; ++i) {
      double d = v[i] - norm.mean[i];
      norm.stddev[i] += d * d;
    }
  }
  for (size_t i = 0; i < m; ++i) {
    norm.stddev[i] = std::sqrt(norm.stddev[i] / static_cast<double>(ds.train_idx.size()));
    if (norm.stddev[i] == 0.0) {
      // constant feature: leave it untouched (identity transform)
      norm.stddev[i] = 1.0;
      norm.mean[i] = 0.0;
      if (warnings) {
        warnings->push_back("zscore: feature " + std::to_string(i) +
                            " is constant on the train split; left unnormalized");
      }
    }
  }
  for (auto& s : ds.samples) s.values = apply_normalization(s.values, norm);
  ds.normalization = norm;
  return ds;
}

Matrix apply_normalization(const Matrix& x, const Normalization& n) {
  require(static_cast<size_t>(x.size()) == n.mean.size(), "shape_mismatch",
          "apply_normalization: shape mismatch");
  Matrix out(x.rows(), x.cols());
  auto xi = x.flat();
  auto oi = out.flat();
  for (size_t i = 0; i < xi.size(); ++i) oi[i] = (xi[i] - n.mean[i]) / n.stddev[i];
  return out;
}

Matrix invert_normalization(const Matrix& z, const Normalization& n) {
  require(static_cast<size_t>(z.size()) == n.mean.size(), "shape_mismatch",
          "invert_normalization: shape mismatch");
  Matrix out(z.rows(), z.cols());
  auto zi = z.flat();
  auto oi = out.flat();
  for (size_t i = 0; i < zi.size(); ++i) oi[i] = zi[i] * n.stddev[i] + n.mean[i];
  return out;
}

// --- sample CSV --------------------------------------------------------------

void write_sample_csv(const Sample& s, const fs::path& path) {
  std::ofstream out(path);
  require(out.good(), "io_error", "cannot open '" + path.string() + "' for writing");
  out << "# id: " << s.id << "\n";
  if (s.label) out << "# label: " << *s.label << "\n";
  char buf[64];
  for (int r = 0; r < s.values.rows(); ++r) {
    for (int l = 0; l < s.values.cols(); ++l) {
      std::snprintf(buf, sizeof(buf), "%.17g", s.values(r, l));
      out << (l ? "," : "") << buf;
    }
    out << "\n";
  }
  require(out.good(), "io_error", "write failed for '" + path.string() + "'");
}

std::vector<Sample> read_samples_csv(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), "missing_file", "cannot open '" + path.string() + "'");
  std::vector<Sample> out;
  std::vector<std::vector<double>> rows;
  Sample cur;
  bool in_sample = false;

  auto flush = [&]() {
    if (!in_sample && rows.empty()) return;
    require(!rows.empty(), "format_error",
            "'" + path.string() + "': sample '" + cur.id + "' has no data rows");
    Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
    for (size_t r = 0; r < rows.size(); ++r) {
      for (size_t c = 0; c < rows[r].size(); ++c) m(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
    }
    cur.values = std::move(m);
    out.push_back(std::move(cur));
    cur = Sample{};
    rows.clear();
    in_sample = false;
  };

  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      // header lines open a new sample once data rows were seen
      if (!rows.empty()) flush();
      in_sample = true;
      std::string body = line.substr(1);
      size_t colon = body.find(':');
      if (colon == std::string::npos) continue;  // free-form comment
      std::string key = body.substr(0, colon);
      std::string value = body.substr(colon + 1);
      auto trim = [](std::string& s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t") + 1);
      };
      trim(key);
      trim(value);
      if (key == "id") {
        cur.id = value;
      } else if (key == "label") {
        int lbl = 0;
        auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), lbl);
        require(ec == std::errc() && p == value.data() + value.size(), "format_error",
                "'" + path.string() + "' line " + std::to_string(line_no) + ": bad label '" +
                    value + "'");
        cur.label = lbl;
      }
      continue;
    }
    in_sample = true;
    std::vector<double> vals;
    size_t start = 0;
    int col = 0;
    while (start <= line.size()) {
      size_t comma = line.find(',', start);
      std::string cell = line.substr(start, comma == std::string::npos ? std::string::npos
                                                                       : comma - start);
      ++col;
      size_t from = cell.find_first_not_of(" \t");
      size_t to = cell.find_last_not_of(" \t");
      require(from != std::string::npos, "format_error",
              "'" + path.string() + "' line " + std::to_string(line_no) + ", column " +
                  std::to_string(col) + ": empty cell");
      cell = cell.substr(from, to - from + 1);
      char* endp = nullptr;
      double v = std::strtod(cell.c_str(), &endp);
      require(endp == cell.c_str() + cell.size(), "format_error",
              "'" + path.string() + "' line " + std::to_string(line_no) + ", column " +
                  std::to_string(col) + ": non-numeric cell '" + cell + "'");
      vals.push_back(v);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && vals.size() != rows.front().size()) {
      fail("format_error", "'" + path.string() + "' line " + std::to_string(line_no) +
                               ": ragged row (" + std::to_string(vals.size()) + " values, expected " +
                               std::to_string(rows.front().size()) + ")");
    }
    rows.push_back(std::move(vals));
  }
  flush();
  return out;
}

std::vector<Sample> read_samples(const fs::path& path) {
  require(fs::exists(path), "missing_file", "'" + path.string() + "' does not exist");
  if (fs::is_directory(path)) {
    fs::path manifest = path / "manifest.json";
    if (fs::exists(manifest)) {
      Dataset ds = read_dataset(path);
      return std::move(ds.samples);
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path)) {
      if (e.path().extension() == ".csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Sample> out;
    for (const auto& f : files) {
      auto part = read_samples_csv(f);
      out.insert(out.end(), std::make_move_iterator(part.begin()),
                 std::make_move_iterator(part.end()));
    }
    return out;
  }
  if (path.extension() == ".json") {
    Dataset ds = read_dataset(path.parent_path());
    return std::move(ds.samples);
  }
  return read_samples_csv(path);
}

// --- dataset directory --------------------------------------------------------

void write_dataset(const Dataset& ds, const fs::path& dir, bool force) {
  fs::path manifest = dir / "manifest.json";
  require(force || !fs::exists(manifest), "overwrite_refused",
          "'" + manifest.string() + "' exists (use --force to overwrite)");
  fs::create_directories(dir / "samples");

  json j;
  j["format_version"] = 1;
  j["classes"] = ds.classes;
  if (!ds.samples.empty()) {
    j["rows"] = ds.samples.front().values.rows();
    j["cols"] = ds.samples.front().values.cols();
  }
  json files = json::array();
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "samples/s%05zu.csv", i);
    write_sample_csv(ds.samples[i], dir / buf);
    files.push_back(buf);
  }
  j["samples"] = files;
  j["splits"] = {{"train", ds.train_idx}, {"val", ds.val_idx}, {"test", ds.test_idx}};
  if (ds.normalization) {
    j["normalization"] = {{"mean", ds.normalization->mean}, {"std", ds.normalization->stddev}};
  } else {
    j["normalization"] = nullptr;
  }
  std::ofstream out(manifest);
  require(out.good(), "io_error", "cannot write '" + manifest.string() + "'");
  out << j.dump(2) << "\n";
  require(out.good(), "io_error", "write failed for '" + manifest.string() + "'");
}

Dataset read_dataset(const fs::path& dir) {
  fs::path manifest = dir / "manifest.json";
  std::ifstream in(manifest);
  require(in.good(), "missing_file", "cannot open '" + manifest.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail("format_error", "'" + manifest.string() + "': " + e.what());
  }
  require(j.value("format_version", -1) == 1, "version_mismatch",
          "'" + manifest.string() + "': unsupported format_version");

  Dataset ds;
  ds.classes = j.value("classes", 0);
  for (const auto& f : j.at("samples")) {
    auto part = read_samples_csv(dir / f.get<std::string>());
    require(part.size() == 1, "format_error",
            "'" + f.get<std::string>() + "': expected exactly one sample per dataset file");
    ds.samples.push_back(std::move(part.front()));
  }
  const json& splits = j.at("splits");
  ds.train_idx = splits.at("train").get<std::vector<int>>();
  ds.val_idx = splits.at("val").get<std::vector<int>>();
  ds.test_idx = splits.at("test").get<std::vector<int>>();
  int total = static_cast<int>(ds.samples.size());
  std::vector<bool> seen(total, false);
  for (const auto* split : {&ds.train_idx, &ds.val_idx, &ds.test_idx}) {
    for (int i : *split) {
      require(i >= 0 && i < total, "format_error", "split index out of range");
      require(!seen[i], "format_error", "split indices overlap");
      seen[i] = true;
    }
  }
  require(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }), "format_error",
          "splits do not cover all samples");
  if (!j.at("normalization").is_null()) {
    Normalization n;
    n.mean = j.at("normalization").at("mean").get<std::vector<double>>();
    n.stddev = j.at("normalization").at("std").get<std::vector<double>>();
    ds.normalization = std::move(n);
  }
  return ds;
}

}  // namespace fmd
