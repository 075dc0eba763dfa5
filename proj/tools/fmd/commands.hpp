#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

namespace fmdcli {

// Every command consumes a resolved JSON config (defaults + config file +
// flag overrides already merged) and writes its artifacts plus a
// resolved_config.json echo under cfg["out"]. Re-running a command on its
// own echo reproduces the artifacts bitwise at jobs = 1.
void cmd_synth(const nlohmann::json& cfg);
void cmd_train(const nlohmann::json& cfg);
void cmd_distill(const nlohmann::json& cfg);
void cmd_explain(const nlohmann::json& cfg);
void cmd_evaluate(const nlohmann::json& cfg);
void cmd_biomarker(const nlohmann::json& cfg);

// Shared helpers.
std::filesystem::path require_out_dir(const nlohmann::json& cfg);
void write_resolved_config(const nlohmann::json& cfg, const std::filesystem::path& out);
void refuse_overwrite(const std::filesystem::path& file, bool force);

}  // namespace fmdcli
