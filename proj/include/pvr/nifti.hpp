#pragma once

#include <filesystem>

#include "pvr/volume.hpp"

namespace pvr {

/// Reads a NIfTI-1 single-file image (.nii or .nii.gz). The sform is used
/// when present, otherwise the qform, otherwise pixdim only. Intensity
/// scaling (scl_slope/scl_inter) is applied. Throws IoError.
Volume read_nifti(const std::filesystem::path& path);

/// Writes a NIfTI-1 float32 image with matching sform and qform. A path
/// ending in .gz is gzip-compressed. Throws IoError.
void write_nifti(const std::filesystem::path& path, const Volume& v);

}  // namespace pvr
