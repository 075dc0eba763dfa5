#pragma once

#include <filesystem>

#include "fmd/classifier.hpp"
#include "fmd/fmd_prior.hpp"

namespace fmd {

/// Checkpoint container: an 8-byte little-endian payload-length prefix, a
/// UTF-8 JSON header of that length, then consecutive little-endian float32
/// parameter blocks in header-declared order. Parameters are float32-valued
/// in memory, so save -> load reproduces them bitwise and
/// save -> load -> save produces byte-identical files.
/// The header schema ships in schemas/checkpoint_header.schema.json.

inline constexpr int kCheckpointFormatVersion = 1;

void save_prior(const FmdPrior& prior, const std::filesystem::path& path);
FmdPrior load_prior(const std::filesystem::path& path);

void save_classifier(const Classifier& clf, const std::filesystem::path& path);
Classifier load_classifier(const std::filesystem::path& path);

}  // namespace fmd
