#pragma once

#include <filesystem>
#include <string>

#include "fawn/model.hpp"

namespace fawn {

inline constexpr const char* kCheckpointMagic = "FAWN1";

/// Self-describing JSON document: spec, every parameter tensor, prior, likelihood noise,
/// optimizer state and (when present) standardization statistics.
std::string checkpoint_to_string(const ModelState& model);
ModelState checkpoint_from_string(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const ModelState& model);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace fawn
