#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "pvr/pipeline.hpp"

namespace pvr {

using KeyValues = std::map<std::string, std::string>;

/// Plain-text key=value file, one entry per line, '#' starts a comment.
KeyValues read_key_values(const std::filesystem::path& path);
void write_key_values(const std::filesystem::path& path, const KeyValues& kv);

/// Every reproducibility-relevant field of a config.
KeyValues config_to_key_values(const PipelineConfig& cfg);
/// Inverse of config_to_key_values; unknown keys are ignored.
PipelineConfig config_from_key_values(const KeyValues& kv);

}  // namespace pvr
