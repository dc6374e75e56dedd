#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pvr/volume.hpp"

namespace pvr {

/// 8-bit RGB PNG of a scalar image mapped through a fixed black-red-yellow-white
/// ramp over [lo, hi].
void write_heat_png(const std::filesystem::path& path, const Image2D& image, double lo, double hi);

/// Minimal CSV writer: header then rows of pre-formatted cells.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

/// Reads a CSV with a header row into string cells.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                               std::vector<std::string>* header = nullptr);

/// Round-trippable decimal formatting of a double.
std::string format_double(double v);

}  // namespace pvr
