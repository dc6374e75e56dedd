#pragma once

#include <cstdint>
#include <optional>
#include <span>

namespace pvr {

/// Pearson-normalized cross correlation over the samples where `mask` is
/// non-zero (all samples when the mask is empty):
///   CC = 1/N sum (a - mean_a)(b - mean_b) / (sd_a sd_b)
/// with population standard deviations. Returns nullopt when fewer than two
/// samples are selected or either side has zero variance.
std::optional<double> cc_similarity(std::span<const double> fixed, std::span<const double> moving,
                                    std::span<const std::uint8_t> mask = {});

}  // namespace pvr
