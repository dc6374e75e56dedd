#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pvr/patches.hpp"
#include "pvr/superres.hpp"

namespace pvr {

/// Inlier/outlier mixture parameters and their fitting history.
struct EMState {
  double sigma2 = 0.0;   // inlier residual variance
  double mix = 0.9;      // inlier proportion c
  double density = 0.0;  // uniform outlier density m
  bool zero_spread = false;
  bool initialized = false;
  int rounds = 0;
  /// Entry 0 is at the starting parameters, then one entry per round.
  std::vector<double> log_likelihood;
};

struct EMConfig {
  int max_rounds = 20;
  /// Stop when the log-likelihood gain falls below tolerance * |LL|.
  double tolerance = 1e-6;
  /// Patches with score below this are outliers.
  double threshold = 0.5;
  /// sigma^2 >= floor_fraction * intensity_range^2
  double sigma_floor_fraction = 1e-6;
  double intensity_range = 1.0;
  double initial_mix = 0.9;
};

/// Density returned when every residual is identical.
inline constexpr double kZeroSpreadDensity = 1e12;

/// m = 1 / (max(e) - min(e)). Throws EmptyInputError for an empty list;
/// returns kZeroSpreadDensity when the range is zero.
double uniform_density(std::span<const double> e);

/// Zero-mean Gaussian density with standard deviation sigma.
double gaussian_density(double e, double sigma);

/// p = G(e) c / (G(e) c + m (1 - c)); 0 when the denominator vanishes.
double pixel_posterior(double e, double sigma, double c, double m);

/// pbar = sqrt(sum p^2 / N); 0 for an empty set.
double patch_score(std::span<const double> p);

/// Residuals of one patch (observed - simulated) per dilated pixel; NaN marks
/// pixels outside the statistics. Those get posterior 1 and do not enter
/// sigma, c, m or the patch score.
using PatchResiduals = std::vector<double>;

struct EMResult {
  EMState state;
  std::vector<std::vector<double>> posteriors;
  std::vector<double> scores;
  std::vector<std::uint8_t> outlier;
  int excluded = 0;
};

/// Alternates E (posteriors) and M (sigma^2 as the p-weighted residual
/// variance, c as the mean posterior) until the log-likelihood gain is
/// small or max_rounds is reached. m is recomputed from all live residuals
/// first. Starts from `previous` when it is initialized.
EMResult em_update(std::span<const PatchResiduals> residuals, const EMState& previous,
                   const EMConfig& cfg);

/// Log-likelihood sum log(c G(e) + (1 - c) m) over finite residuals.
double mixture_log_likelihood(std::span<const PatchResiduals> residuals, double sigma2, double c,
                              double m);

/// Writes posteriors, scores and exclusion flags into the patches.
void apply_em(std::vector<Patch>& patches, const EMResult& result);

/// Residuals of every patch against the current reconstruction. Pixels
/// where both the observed and simulated magnitudes are <= background are
/// left out (NaN) like unobserved ones.
std::vector<PatchResiduals> compute_residuals(const ForwardModel& model, const Volume& recon,
                                              std::span<const Patch> patches, int workers,
                                              double background = -1.0);

/// Per-voxel rigidity: PSF-scatter of p * pbar from every patch, normalized by
/// the scattered PSF weight and clamped to [0, 1]. Unobserved voxels are 0.
Volume rigidity_map(const ForwardModel& model, std::span<const Patch> patches, int workers,
                    bool deterministic);

}  // namespace pvr
