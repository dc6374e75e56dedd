#include "pvr/similarity.hpp"

#include <cmath>

#include "pvr/error.hpp"

namespace pvr {

std::optional<double> cc_similarity(std::span<const double> fixed, std::span<const double> moving,
                                    std::span<const std::uint8_t> mask) {
  if (fixed.size() != moving.size()) throw ParameterError("cc_similarity: sample counts differ");
  if (!mask.empty() && mask.size() != fixed.size()) throw ParameterError("cc_similarity: mask size differs");
  auto selected = [&](std::size_t i) { return mask.empty() || mask[i] != 0; };

  double sa = 0.0, sb = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    if (!selected(i)) continue;
    sa += fixed[i];
    sb += moving[i];
    ++n;
  }
  if (n < 2) return std::nullopt;
  const double ma = sa / static_cast<double>(n);
  const double mb = sb / static_cast<double>(n);
  double cov = 0.0, va = 0.0, vb = 0.0, qa = 0.0, qb = 0.0;
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    if (!selected(i)) continue;
    const double da = fixed[i] - ma;
    const double db = moving[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
    qa += fixed[i] * fixed[i];
    qb += moving[i] * moving[i];
  }
  // Rounding leaves a tiny variance on constant inputs; treat it as zero.
  if (va <= 1e-20 * qa || vb <= 1e-20 * qb) return std::nullopt;
  return cov / (std::sqrt(va) * std::sqrt(vb));
}

}  // namespace pvr
