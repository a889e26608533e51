#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cdgmae/vit.hpp"

namespace cdgmae {

/// ModelConfig as ordered key/value text; doubles use round-trip precision.
std::vector<std::pair<std::string, std::string>> model_config_items(const ModelConfig& config);

/// Sets one ModelConfig field from text. Returns false for unknown keys and
/// throws ContractError for unparsable values.
bool apply_model_key(ModelConfig& config, const std::string& key, const std::string& value);

struct Checkpoint {
  ModelParams params;
  std::uint64_t step = 0;
};

/// Writes one tensor file per parameter plus `manifest.txt` (config, step,
/// parameter names and shapes). The directory is replaced atomically.
void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params, std::uint64_t step);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace cdgmae
