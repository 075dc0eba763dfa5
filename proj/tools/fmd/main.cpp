#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "commands.hpp"
#include "fmd/error.hpp"

namespace {

using nlohmann::json;

// Layered configuration: built-in defaults, then the config file's section
// for this command (or the whole file when it is a resolved echo), then any
// flags given on the command line.
json resolve_config(const std::string& command, const std::string& config_path,
                    const json& flag_overrides) {
  json cfg{{"command", command}};
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    fmd::require(in.good(), "missing_file", "cannot open config '" + config_path + "'");
    json file;
    try {
      in >> file;
    } catch (const json::exception& e) {
      fmd::fail("invalid_config", "config '" + config_path + "': " + e.what());
    }
    if (file.contains("command")) {
      fmd::require(file.at("command") == command, "invalid_config",
                   "config '" + config_path + "' is a resolved echo for '" +
                       file.at("command").get<std::string>() + "', not '" + command + "'");
      cfg.update(file);
    } else if (file.contains(command)) {
      cfg.update(file.at(command));
    }
  }
  cfg.update(flag_overrides);
  cfg["command"] = command;
  return cfg;
}

struct FlagSink {
  json overrides;

  // CLI11 callbacks write into the override object only when a flag was
  // actually given, so config-file values survive.
  template <typename T>
  std::function<void(const T&)> set(const std::string& key) {
    return [this, key](const T& v) { overrides[key] = v; };
  }
};

void add_train_flags(CLI::App* cmd, FlagSink& sink) {
  cmd->add_option_function<int>("--epochs", sink.set<int>("epochs"), "training epochs");
  cmd->add_option_function<double>("--lr", sink.set<double>("lr"), "Adam learning rate");
  cmd->add_option_function<int>("--batch", sink.set<int>("batch"), "batch size");
  cmd->add_option_function<double>("--beta1", sink.set<double>("beta1"), "Adam beta1");
  cmd->add_option_function<double>("--beta2", sink.set<double>("beta2"), "Adam beta2");
}

void add_common_flags(CLI::App* cmd, FlagSink& sink) {
  cmd->add_option_function<std::string>("--out", sink.set<std::string>("out"),
                                        "output directory");
  cmd->add_option_function<uint64_t>("--seed", sink.set<uint64_t>("seed"), "RNG seed");
  cmd->add_flag_function("--force",
                         [&sink](int64_t) { sink.overrides["force"] = true; },
                         "overwrite existing artifacts");
  cmd->add_option_function<int>("--jobs", sink.set<int>("jobs"),
                                "worker threads (1 = deterministic reference path)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fmd: fractional multi-phase-distilled diffusion counterfactuals"};
  app.require_subcommand(1);

  std::string config_path;
  if (const char* env = std::getenv("FMD_CONFIG")) config_path = env;
  app.add_option("--config", config_path,
                 "declarative config file (JSON; FMD_CONFIG sets the default)");

  FlagSink synth_sink, train_sink, distill_sink, explain_sink, eval_sink, bio_sink;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common_flags(synth, synth_sink);
  synth->add_option_function<int>("--rows", synth_sink.set<int>("rows"), "regions R");
  synth->add_option_function<int>("--cols", synth_sink.set<int>("cols"), "timepoints L");
  synth->add_option_function<int>("--classes", synth_sink.set<int>("classes"), "class count");
  synth->add_option_function<int>("--n-per-class", synth_sink.set<int>("n_per_class"),
                                  "samples per class");
  synth->add_option_function<double>("--rho", synth_sink.set<double>("default_rho"),
                                     "block correlation of the default template");
  synth->add_option_function<double>("--noise-std", synth_sink.set<double>("noise_std"),
                                     "additional white-noise level");
  synth->add_flag_function("--no-zscore",
                           [&synth_sink](int64_t) { synth_sink.overrides["zscore"] = false; },
                           "skip train-split z-scoring");

  CLI::App* train = app.add_subcommand("train", "train the FMD prior (or a classifier)");
  add_common_flags(train, train_sink);
  add_train_flags(train, train_sink);
  train->add_option_function<std::string>("--data", train_sink.set<std::string>("data"),
                                          "dataset directory");
  train->add_option_function<std::string>("--model", train_sink.set<std::string>("model"),
                                          "prior | classifier");
  train->add_option_function<int>("--T", train_sink.set<int>("T"), "diffusion steps");
  train->add_option_function<int>("--fractions", train_sink.set<int>("fractions"),
                                  "fraction count F");
  train->add_option_function<std::string>("--schedule", train_sink.set<std::string>("schedule"),
                                          "cosine | linear-lambda");
  train->add_option_function<std::string>("--arch", train_sink.set<std::string>("arch"),
                                          "dense | windowed-attention");
  train->add_option_function<int>("--hidden-dim", train_sink.set<int>("hidden_dim"),
                                  "hidden width");
  train->add_option_function<int>("--time-embed-dim", train_sink.set<int>("time_embed_dim"),
                                  "time embedding channels");
  train->add_option_function<int>("--window-len", train_sink.set<int>("window_len"),
                                  "attention window length");
  train->add_option_function<std::string>("--kind", train_sink.set<std::string>("kind"),
                                          "classifier kind (softmax-linear | small-dense)");
  train->add_option_function<std::string>("--feature-map",
                                          train_sink.set<std::string>("feature_map"),
                                          "classifier features (fc-features | raw-flatten)");
  train->add_option_function<int>("--classes", train_sink.set<int>("classes"),
                                  "classifier classes");

  CLI::App* distill = app.add_subcommand("distill", "run multi-phase distillation");
  add_common_flags(distill, distill_sink);
  add_train_flags(distill, distill_sink);
  distill->add_option_function<std::string>("--checkpoint",
                                            distill_sink.set<std::string>("checkpoint"),
                                            "input prior checkpoint");
  distill->add_option_function<std::string>("--data", distill_sink.set<std::string>("data"),
                                            "dataset directory");
  distill->add_option_function<int>("--phases", distill_sink.set<int>("phases"),
                                    "number of phases to add");
  distill->add_flag_function(
      "--whole-process",
      [&distill_sink](int64_t) { distill_sink.overrides["whole_process"] = true; },
      "single-pass distillation straight to the target stride (ablation)");

  CLI::App* explain = app.add_subcommand("explain", "generate counterfactual explanations");
  add_common_flags(explain, explain_sink);
  explain->add_option_function<std::string>("--checkpoint",
                                            explain_sink.set<std::string>("checkpoint"),
                                            "prior checkpoint");
  explain->add_option_function<std::string>("--classifier",
                                            explain_sink.set<std::string>("classifier"),
                                            "classifier checkpoint");
  explain->add_option_function<std::string>("--input", explain_sink.set<std::string>("input"),
                                            "sample file, manifest or dataset directory");
  explain->add_option_function<std::string>("--split", explain_sink.set<std::string>("split"),
                                            "dataset split to explain (train|val|test|all)");
  explain->add_option_function<std::string>("--target", explain_sink.set<std::string>("target"),
                                            "target class index, or 'all'");
  explain->add_option_function<double>("--scale", explain_sink.set<double>("scale"),
                                       "guidance scale s");
  explain->add_option_function<int>("--delta-t", explain_sink.set<int>("delta_t"),
                                    "initial diffusion step (default T/2)");
  explain->add_option_function<int>("--limit", explain_sink.set<int>("limit"),
                                    "explain at most N samples");
  explain->add_flag_function(
      "--per-step", [&explain_sink](int64_t) { explain_sink.overrides["per_step"] = true; },
      "recompute guidance at every reverse step (off-spec exploratory mode)");

  CLI::App* evaluate = app.add_subcommand("evaluate", "score counterfactuals against originals");
  add_common_flags(evaluate, eval_sink);
  evaluate->add_option_function<std::string>("--counterfactuals",
                                             eval_sink.set<std::string>("counterfactuals"),
                                             "explain output directory");
  evaluate->add_option_function<std::string>("--originals",
                                             eval_sink.set<std::string>("originals"),
                                             "directory overriding the stored originals");
  evaluate->add_option_function<std::string>("--classifier",
                                             eval_sink.set<std::string>("classifier"),
                                             "classifier checkpoint");
  evaluate->add_option_function<std::string>("--sigma-f-data",
                                             eval_sink.set<std::string>("sigma_f_data"),
                                             "dataset whose train split defines sigma_f");
  evaluate->add_option_function<double>("--sigma-f", eval_sink.set<double>("sigma_f"),
                                        "scalar sparsity threshold");
  evaluate->add_option_function<std::string>("--feature-map",
                                             eval_sink.set<std::string>("feature_map"),
                                             "Frechet features (fc-features | raw-flatten)");
  evaluate->add_option_function<std::string>("--cov", eval_sink.set<std::string>("cov"),
                                             "covariance mode (full | diagonal)");

  CLI::App* biomarker = app.add_subcommand("biomarker", "rank FC features from counterfactuals");
  add_common_flags(biomarker, bio_sink);
  biomarker->add_option_function<std::string>("--counterfactuals",
                                              bio_sink.set<std::string>("counterfactuals"),
                                              "explain output directory");
  biomarker->add_option_function<std::string>("--originals",
                                              bio_sink.set<std::string>("originals"),
                                              "directory overriding the stored originals");
  biomarker->add_option_function<double>("--top-pct", bio_sink.set<double>("top_pct"),
                                         "percentile of features to keep");
  biomarker->add_flag_function("--probe",
                               [&bio_sink](int64_t) { bio_sink.overrides["probe"] = true; },
                               "train a logistic probe on FC-diff features");
  biomarker->add_option_function<int>("--probe-epochs", bio_sink.set<int>("probe_epochs"),
                                      "probe training epochs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "fmd: error [invalid_args] " << e.what() << "\n";
    return 1;
  }

  try {
    if (synth->parsed()) {
      fmdcli::cmd_synth(resolve_config("synth", config_path, synth_sink.overrides));
    } else if (train->parsed()) {
      fmdcli::cmd_train(resolve_config("train", config_path, train_sink.overrides));
    } else if (distill->parsed()) {
      fmdcli::cmd_distill(resolve_config("distill", config_path, distill_sink.overrides));
    } else if (explain->parsed()) {
      fmdcli::cmd_explain(resolve_config("explain", config_path, explain_sink.overrides));
    } else if (evaluate->parsed()) {
      fmdcli::cmd_evaluate(resolve_config("evaluate", config_path, eval_sink.overrides));
    } else if (biomarker->parsed()) {
      fmdcli::cmd_biomarker(resolve_config("biomarker", config_path, bio_sink.overrides));
    }
  } catch (const fmd::Error& e) {
    std::cerr << "fmd: error [" << e.category() << "] " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "fmd: error [internal] " << e.what() << "\n";
    return 1;
  }
  return 0;
}
