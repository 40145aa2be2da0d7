#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "csa/layers.hpp"

namespace csa {

using NamedParams = std::vector<std::pair<std::string, Param*>>;

// {"<layer path>": {"shape": [rows, cols], "values": [...]}, ...}
nlohmann::json checkpoint_to_json(const NamedParams& params);
// Overwrites every named parameter; throws ShapeError on missing entries or
// shape disagreement.
void checkpoint_from_json(const nlohmann::json& doc, const NamedParams& params);

void save_checkpoint(const std::filesystem::path& path, const NamedParams& params);
void load_checkpoint(const std::filesystem::path& path, const NamedParams& params);

}  // namespace csa
