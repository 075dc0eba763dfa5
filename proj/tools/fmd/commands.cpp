#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>

#include "fmd/checkpoint.hpp"
#include "fmd/counterfactual.hpp"
#include "fmd/data_io.hpp"
#include "fmd/error.hpp"
#include "fmd/metrics.hpp"
#include "fmd/rng.hpp"

namespace fmdcli {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fmd;

fs::path require_out_dir(const json& cfg) {
  std::string out = cfg.value("out", "");
  require(!out.empty(), "invalid_config", "--out is required");
  fs::create_directories(out);
  return out;
}

void refuse_overwrite(const fs::path& file, bool force) {
  require(force || !fs::exists(file), "overwrite_refused",
          "'" + file.string() + "' exists (use --force to overwrite)");
}

void write_resolved_config(const json& cfg, const fs::path& out) {
  fs::path file = out / "resolved_config.json";
  refuse_overwrite(file, cfg.value("force", false));
  std::ofstream o(file);
  require(o.good(), "io_error", "cannot write '" + file.string() + "'");
  o << cfg.dump(2) << "\n";
}

namespace {

TrainConfig train_config_from(const json& cfg) {
  TrainConfig t;
  t.epochs = cfg.value("epochs", t.epochs);
  t.lr = cfg.value("lr", t.lr);
  t.batch = cfg.value("batch", t.batch);
  t.beta1 = cfg.value("beta1", t.beta1);
  t.beta2 = cfg.value("beta2", t.beta2);
  return t;
}

Dataset load_dataset_arg(const json& cfg, const std::string& key) {
  std::string path = cfg.value(key, "");
  require(!path.empty(), "invalid_config", "--" + key + " is required");
  require(fs::exists(path), "missing_file", "'" + path + "' does not exist");
  return read_dataset(path);
}

std::string index_name(const char* stem, int i, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%05d%s", stem, i, suffix);
  return buf;
}

json trace_to_json(const CounterfactualResult& r, const GuidanceConfig& gcfg) {
  json fractions = json::array();
  for (const auto& tr : r.trace) {
    fractions.push_back({{"fraction", tr.fraction},
                         {"entry_step", tr.entry_step},
                         {"posterior_target", tr.posterior_target},
                         {"gamma", tr.gamma},
                         {"calls_after", tr.calls_after}});
  }
  return json{{"original_id", r.original.id},
              {"target", r.target},
              {"scale", gcfg.scale},
              {"delta_t", gcfg.delta_t},
              {"rng_seed", gcfg.rng_seed},
              {"per_step", gcfg.per_step},
              {"denoiser_calls", r.denoiser_calls},
              {"flipped", r.flipped},
              {"posterior_target_final", r.posterior_target_final},
              {"fractions", fractions}};
}

void write_json(const json& j, const fs::path& file, bool force) {
  refuse_overwrite(file, force);
  std::ofstream o(file);
  require(o.good(), "io_error", "cannot write '" + file.string() + "'");
  o << j.dump(2) << "\n";
}

}  // namespace

void cmd_synth(const json& cfg) {
  fs::path out = require_out_dir(cfg);
  bool force = cfg.value("force", false);

  SynthConfig scfg;
  scfg.rows = cfg.value("rows", scfg.rows);
  scfg.cols = cfg.value("cols", scfg.cols);
  scfg.classes = cfg.value("classes", scfg.classes);
  scfg.n_per_class = cfg.value("n_per_class", scfg.n_per_class);
  scfg.seed = cfg.value("seed", scfg.seed);
  scfg.default_rho = cfg.value("default_rho", scfg.default_rho);
  scfg.noise_std = cfg.value("noise_std", scfg.noise_std);
  if (cfg.contains("blocks")) {
    for (const auto& cls : cfg.at("blocks")) {
      std::vector<FcBlock> list;
      for (const auto& b : cls) {
        list.push_back({b.at("first").get<int>(), b.at("count").get<int>(),
                        b.at("rho").get<double>()});
      }
      scfg.class_blocks.push_back(std::move(list));
    }
  }

  Dataset ds = synth_generate(scfg);
  if (cfg.value("zscore", true)) {
    std::vector<std::string> warnings;
    ds = zscore(std::move(ds), &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  }
  write_dataset(ds, out, force);
  write_resolved_config(cfg, out);
  std::cout << "wrote " << ds.samples.size() << " samples to " << out.string() << "\n";
}

void cmd_train(const json& cfg) {
  fs::path out = require_out_dir(cfg);
  bool force = cfg.value("force", false);
  Dataset ds = load_dataset_arg(cfg, "data");
  auto train = ds.split(ds.train_idx);
  require(!train.empty(), "invalid_config", "dataset has an empty train split");
  int rows = train.front().values.rows();
  int cols = train.front().values.cols();
  TrainConfig tcfg = train_config_from(cfg);
  uint64_t seed = cfg.value("seed", 0ull);

  std::string model = cfg.value("model", "prior");
  if (model == "prior") {
    int T = cfg.value("T", 64);
    int F = cfg.value("fractions", 4);
    NoiseSchedule sched = build_schedule(T, cfg.value("schedule", std::string("cosine")));
    FractionLayout layout = FractionLayout::uniform(T, F);
    DenoiserConfig dcfg;
    dcfg.arch = denoiser_arch_from_string(cfg.value("arch", std::string("dense")));
    dcfg.hidden_dim = cfg.value("hidden_dim", 128);
    dcfg.time_embed_dim = cfg.value("time_embed_dim", 16);
    dcfg.window_len = cfg.value("window_len", 8);
    dcfg.rows = rows;
    dcfg.cols = cols;
    dcfg.total_steps = T;

    fs::path ckpt = out / "prior.ckpt";
    refuse_overwrite(ckpt, force);
    FmdPrior prior =
        train_fractions(train, tcfg, sched, layout, dcfg, seed, cfg.value("jobs", 1));
    save_prior(prior, ckpt);
    write_resolved_config(cfg, out);
    std::cout << "trained prior: T=" << T << " F=" << F << " -> " << ckpt.string() << "\n";
  } else if (model == "classifier") {
    ClassifierConfig ccfg;
    ccfg.kind = classifier_kind_from_string(cfg.value("kind", std::string("softmax-linear")));
    ccfg.feature_map = feature_map_from_string(cfg.value("feature_map", std::string("fc-features")));
    ccfg.classes = cfg.value("classes", ds.classes > 0 ? ds.classes : 2);
    ccfg.rows = rows;
    ccfg.cols = cols;
    ccfg.hidden_dim = cfg.value("hidden_dim", 32);
    ccfg.seed = seed;

    fs::path ckpt = out / "classifier.ckpt";
    refuse_overwrite(ckpt, force);
    Classifier clf = train_classifier(ccfg, train, tcfg, seed);
    save_classifier(clf, ckpt);

    auto accuracy = [&clf](const std::vector<Sample>& split) {
      if (split.empty()) return 0.0;
      int ok = 0;
      for (const auto& s : split) ok += s.label && clf.predict(s.values) == *s.label;
      return static_cast<double>(ok) / split.size();
    };
    json report{{"train_accuracy", accuracy(train)},
                {"val_accuracy", accuracy(ds.split(ds.val_idx))},
                {"test_accuracy", accuracy(ds.split(ds.test_idx))}};
    write_json(report, out / "train_report.json", force);
    write_resolved_config(cfg, out);
    std::cout << "trained classifier -> " << ckpt.string() << " (test accuracy "
              << report["test_accuracy"] << ")\n";
  } else {
    fail("invalid_config", "unknown --model '" + model + "' (expected prior | classifier)");
  }
}

void cmd_distill(const json& cfg) {
  fs::path out = require_out_dir(cfg);
  bool force = cfg.value("force", false);
  std::string ckpt_in = cfg.value("checkpoint", "");
  require(!ckpt_in.empty(), "invalid_config", "--checkpoint is required");
  FmdPrior prior = load_prior(ckpt_in);
  Dataset ds = load_dataset_arg(cfg, "data");
  auto train = ds.split(ds.train_idx);
  TrainConfig tcfg = train_config_from(cfg);
  uint64_t seed = cfg.value("seed", 0ull);
  int phases = cfg.value("phases", 1);
  require(phases >= 1, "invalid_config", "--phases must be >= 1");
  int jobs = cfg.value("jobs", 1);

  fs::path ckpt_out = out / "prior.ckpt";
  refuse_overwrite(ckpt_out, force);

  json phase_log = json::array();
  if (cfg.value("whole_process", false)) {
    // single-ladder ablation: one pass straight to the target stride
    auto res = distill_to_phase(prior, train, tcfg, prior.phase + phases, seed, jobs);
    phase_log.push_back({{"phase", res.prior.phase},
                         {"skipped_degenerate", res.skipped_degenerate}});
    prior = std::move(res.prior);
  } else {
    for (int p = 0; p < phases; ++p) {
      auto res = distill_phase(prior, train, tcfg, mix_seed(seed, p), jobs);
      phase_log.push_back({{"phase", res.prior.phase},
                           {"skipped_degenerate", res.skipped_degenerate}});
      prior = std::move(res.prior);
    }
  }
  save_prior(prior, ckpt_out);
  write_json(json{{"final_phase", prior.phase},
                  {"step_size", prior.step_size()},
                  {"phases", phase_log}},
             out / "distill_report.json", force);
  write_resolved_config(cfg, out);
  std::cout << "distilled to phase " << prior.phase << " (step size " << prior.step_size()
            << ") -> " << ckpt_out.string() << "\n";
}

void cmd_explain(const json& cfg) {
  fs::path out = require_out_dir(cfg);
  bool force = cfg.value("force", false);
  std::string ckpt = cfg.value("checkpoint", "");
  std::string clf_path = cfg.value("classifier", "");
  std::string input = cfg.value("input", "");
  require(!ckpt.empty() && !clf_path.empty() && !input.empty(), "invalid_config",
          "--checkpoint, --classifier and --input are required");

  FmdPrior prior = load_prior(ckpt);
  Classifier clf = load_classifier(clf_path);

  std::vector<Sample> samples;
  fs::path in_path(input);
  require(fs::exists(in_path), "missing_file", "'" + input + "' does not exist");
  if (fs::is_directory(in_path) && fs::exists(in_path / "manifest.json")) {
    Dataset ds = read_dataset(in_path);
    std::string split = cfg.value("split", "test");
    if (split == "train") samples = ds.split(ds.train_idx);
    else if (split == "val") samples = ds.split(ds.val_idx);
    else if (split == "test") samples = ds.split(ds.test_idx);
    else if (split == "all") samples = std::move(ds.samples);
    else fail("invalid_config", "unknown --split '" + split + "'");
  } else {
    samples = read_samples(in_path);
  }
  int limit = cfg.value("limit", 0);
  if (limit > 0 && static_cast<int>(samples.size()) > limit) samples.resize(limit);
  require(!samples.empty(), "invalid_argument", "no input samples to explain");

  GuidanceConfig base;
  base.scale = cfg.value("scale", 50.0);
  base.delta_t = cfg.value("delta_t", -1);
  base.per_step = cfg.value("per_step", false);
  uint64_t seed = cfg.value("seed", 0ull);
  std::string target_spec = cfg.contains("target") && cfg.at("target").is_number_integer()
                                ? std::to_string(cfg.at("target").get<int>())
                                : cfg.value("target", "all");

  json entries = json::array();
  long total_calls = 0;
  int generated = 0, skipped = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    int predicted = clf.predict(s.values);
    std::vector<int> targets;
    if (target_spec == "all") {
      for (int c = 0; c < clf.config().classes; ++c) {
        if (c != predicted) targets.push_back(c);
      }
    } else {
      targets.push_back(std::stoi(target_spec));
    }

    std::string orig_file = index_name("orig", static_cast<int>(i), ".csv");
    write_sample_csv(s, out / orig_file);

    json target_rows = json::array();
    Matrix diff_sum(s.values.rows(), s.values.cols());
    int diff_count = 0;
    for (int tgt : targets) {
      json row{{"target", tgt}};
      if (tgt == predicted) {
        // reported, not silently accepted
        row["status"] = "already_target";
        ++skipped;
        target_rows.push_back(row);
        continue;
      }
      GuidanceConfig gcfg = base;
      gcfg.target = tgt;
      gcfg.rng_seed = mix_seed(seed, i);
      CounterfactualResult res = generate(prior, clf, s, gcfg);
      std::string cf_file = index_name("cf", static_cast<int>(i), "") + "_t" +
                            std::to_string(tgt) + ".csv";
      std::string trace_file = index_name("trace", static_cast<int>(i), "") + "_t" +
                               std::to_string(tgt) + ".json";
      refuse_overwrite(out / cf_file, force);
      write_sample_csv(res.counterfactual, out / cf_file);
      write_json(trace_to_json(res, gcfg), out / trace_file, force);
      diff_sum += res.diff;
      ++diff_count;
      total_calls += res.denoiser_calls;
      ++generated;
      row["status"] = "ok";
      row["counterfactual_file"] = cf_file;
      row["trace_file"] = trace_file;
      row["flipped"] = res.flipped;
      row["posterior_target"] = res.posterior_target_final;
      row["denoiser_calls"] = res.denoiser_calls;
      target_rows.push_back(row);
    }

    std::string diff_file = index_name("diff", static_cast<int>(i), ".csv");
    if (diff_count > 0) {
      diff_sum *= 1.0 / diff_count;  // averaged over targets in --target all mode
      Sample diff_sample;
      diff_sample.values = diff_sum;
      diff_sample.id = s.id + "-diff";
      refuse_overwrite(out / diff_file, force);
      write_sample_csv(diff_sample, out / diff_file);
    }
    entries.push_back({{"index", i},
                       {"original_id", s.id},
                       {"original_file", orig_file},
                       {"predicted", predicted},
                       {"diff_file", diff_count > 0 ? json(diff_file) : json(nullptr)},
                       {"targets", target_rows}});
  }

  write_json(json{{"format_version", 1},
                  {"entries", entries},
                  {"generated", generated},
                  {"skipped", skipped},
                  {"total_denoiser_calls", total_calls}},
             out / "explain_manifest.json", force);
  write_resolved_config(cfg, out);
  std::cout << "generated " << generated << " counterfactuals (" << skipped
            << " skipped) -> " << out.string() << "\n";
}

namespace {

struct LoadedPairs {
  std::vector<CounterfactualResult> results;
};

LoadedPairs load_explain_output(const fs::path& dir, const json& cfg) {
  fs::path manifest = dir / "explain_manifest.json";
  require(fs::exists(manifest), "missing_file",
          "'" + manifest.string() + "' not found (expected an explain output directory)");
  std::ifstream in(manifest);
  json j;
  in >> j;

  fs::path originals_dir = dir;
  if (cfg.contains("originals")) {
    std::string o = cfg.value("originals", "");
    if (!o.empty()) originals_dir = o;
  }

  LoadedPairs out;
  for (const auto& entry : j.at("entries")) {
    fs::path orig_path = originals_dir / entry.at("original_file").get<std::string>();
    auto orig = read_samples_csv(orig_path);
    require(orig.size() == 1, "format_error", "'" + orig_path.string() + "': expected one sample");
    for (const auto& row : entry.at("targets")) {
      if (row.value("status", "") != "ok") continue;
      auto cf = read_samples_csv(dir / row.at("counterfactual_file").get<std::string>());
      require(cf.size() == 1, "format_error", "counterfactual file must hold one sample");
      CounterfactualResult r;
      r.original = orig.front();
      r.counterfactual = cf.front();
      r.target = row.at("target").get<int>();
      r.diff = r.counterfactual.values - r.original.values;
      r.denoiser_calls = row.value("denoiser_calls", 0L);
      out.results.push_back(std::move(r));
    }
  }
  require(!out.results.empty(), "invalid_argument", "no counterfactual pairs found");
  return out;
}

}  // namespace

void cmd_evaluate(const json& cfg) {
  fs::path out = require_out_dir(cfg);
  bool force = cfg.value("force", false);
  std::string cf_dir = cfg.value("counterfactuals", "");
  std::string clf_path = cfg.value("classifier", "");
  require(!cf_dir.empty() && !clf_path.empty(), "invalid_config",
          "--counterfactuals and --classifier are required");
  Classifier clf = load_classifier(clf_path);
  LoadedPairs pairs = load_explain_output(cf_dir, cfg);

  // sparsity threshold: per-feature train std by default, scalar fallback
  std::vector<double> sigma_f;
  std::string sigma_mode;
  if (cfg.contains("sigma_f_data")) {
    Dataset ds = load_dataset_arg(cfg, "sigma_f_data");
    sigma_f = feature_std(ds.split(ds.train_idx));
    sigma_mode = "train-std";
  } else {
    sigma_f = {cfg.value("sigma_f", 1.0)};
    sigma_mode = "scalar";
  }

  FeatureMap fmap = feature_map_from_string(cfg.value("feature_map", std::string("fc-features")));
  CovMode cov = cfg.value("cov", std::string("full")) == "diagonal" ? CovMode::Diagonal
                                                                    : CovMode::Full;
  MetricsReport rep = evaluate_results(pairs.results, clf, sigma_f, fmap, cov);

  write_json(json{{"proximity", rep.proximity},
                  {"proximity_l2", rep.proximity_l2},
                  {"sparsity", rep.sparsity},
                  {"frechet", rep.frechet},
                  {"wasserstein_fc", rep.wasserstein_fc},
                  {"flip_rate", rep.flip_rate},
                  {"n", rep.n},
                  {"feature_map", rep.feature_map},
                  {"cov_mode", cov == CovMode::Full ? "full" : "diagonal"},
                  {"sigma_f_mode", sigma_mode},
                  {"flip_classes_counted", rep.flip_classes_counted},
                  {"frechet_floored", rep.frechet_floored}},
             out / "metrics_report.json", force);

  fs::path per_sample = out / "per_sample.csv";
  refuse_overwrite(per_sample, force);
  std::ofstream ps(per_sample);
  ps << "index,id,target,proximity,proximity_l2,sparsity,flipped,posterior_target\n";
  for (size_t i = 0; i < pairs.results.size(); ++i) {
    const auto& r = pairs.results[i];
    auto post = clf.posterior(r.counterfactual.values);
    bool flipped = clf.predict(r.counterfactual.values) == r.target;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%zu,%s,%d,%.10g,%.10g,%.10g,%d,%.10g\n", i,
                  r.original.id.c_str(), r.target,
                  proximity(r.original.values, r.counterfactual.values),
                  proximity_l2(r.original.values, r.counterfactual.values),
                  sparsity(r.original.values, r.counterfactual.values, sigma_f), flipped ? 1 : 0,
                  post[r.target]);
    ps << buf;
  }
  write_resolved_config(cfg, out);
  std::cout << "metrics over " << rep.n << " pairs: flip_rate=" << rep.flip_rate
            << " proximity=" << rep.proximity << " sparsity=" << rep.sparsity
            << " frechet=" << rep.frechet << " wasserstein_fc=" << rep.wasserstein_fc << "\n";
}

void cmd_biomarker(const json& cfg) {
  fs::path out = require_out_dir(cfg);
  bool force = cfg.value("force", false);
  std::string cf_dir = cfg.value("counterfactuals", "");
  require(!cf_dir.empty(), "invalid_config", "--counterfactuals is required");
  LoadedPairs pairs = load_explain_output(cf_dir, cfg);

  std::vector<std::pair<Sample, Sample>> sample_pairs;
  for (const auto& r : pairs.results) sample_pairs.push_back({r.original, r.counterfactual});
  double top_pct = cfg.value("top_pct", 5.0);
  auto ranked = biomarker_map(sample_pairs, top_pct);

  fs::path csv = out / "biomarker.csv";
  refuse_overwrite(csv, force);
  std::ofstream o(csv);
  o << "rank,region_i,region_j,score\n";
  for (size_t r = 0; r < ranked.size(); ++r) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%zu,%d,%d,%.10g\n", r + 1, ranked[r].i, ranked[r].j,
                  ranked[r].score);
    o << buf;
  }

  if (cfg.value("probe", false)) {
    uint64_t seed = cfg.value("seed", 0ull);
    std::vector<LabelledFeatures> feats;
    for (const auto& r : pairs.results) {
      auto fo = fc_upper(r.original.values);
      auto fc = fc_upper(r.counterfactual.values);
      std::vector<double> diff(fo.size());
      for (size_t q = 0; q < fo.size(); ++q) diff[q] = fc[q] - fo[q];
      feats.push_back({std::move(diff), r.target});
    }
    Rng rng = Rng(seed).derive("probe-split");
    std::vector<int> order(feats.size());
    std::iota(order.begin(), order.end(), 0);
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      std::swap(order[i], order[rng.uniform_int(0, i)]);
    }
    size_t n_train = std::max<size_t>(1, feats.size() * 8 / 10);
    std::vector<LabelledFeatures> train, test;
    for (size_t q = 0; q < order.size(); ++q) {
      (q < n_train ? train : test).push_back(feats[order[q]]);
    }
    require(!test.empty(), "invalid_argument", "probe needs enough pairs for a test split");
    TrainConfig pcfg;
    pcfg.epochs = cfg.value("probe_epochs", 120);
    pcfg.lr = cfg.value("probe_lr", 0.05);
    auto real = logistic_probe(train, test, pcfg, mix_seed(seed, 1));

    Rng perm = Rng(seed).derive("probe-permutation");
    auto shuffled = train;
    std::vector<int> labels;
    labels.reserve(shuffled.size());
    for (const auto& [f, y] : shuffled) labels.push_back(y);
    for (int i = static_cast<int>(labels.size()) - 1; i > 0; --i) {
      std::swap(labels[i], labels[perm.uniform_int(0, i)]);
    }
    for (size_t q = 0; q < shuffled.size(); ++q) shuffled[q].second = labels[q];
    auto baseline = logistic_probe(shuffled, test, pcfg, mix_seed(seed, 2));

    write_json(json{{"accuracy", real.accuracy},
                    {"macro_f1", real.macro_f1},
                    {"permutation_accuracy", baseline.accuracy},
                    {"permutation_macro_f1", baseline.macro_f1},
                    {"margin", real.accuracy - baseline.accuracy},
                    {"n_train", train.size()},
                    {"n_test", test.size()}},
               out / "probe_report.json", force);
  }
  write_resolved_config(cfg, out);
  std::cout << "wrote " << ranked.size() << " ranked FC features -> " << csv.string() << "\n";
}

}  // namespace fmdcli
