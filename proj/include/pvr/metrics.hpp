#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pvr/patches.hpp"
#include "pvr/superres.hpp"
#include "pvr/volume.hpp"

namespace pvr {

/// 10 log10(I_max^2 / MSE) with I_max the maximum of `original`. Returns
/// +infinity when MSE is 0. Throws ParameterError on size mismatch or an
/// all-zero original.
double psnr(std::span<const double> original, std::span<const double> reconstructed);

/// Global-statistics SSIM with c1 = (k1 L)^2, c2 = (k2 L)^2 and the standard
/// mu_I^2 + mu_J^2 luminance denominator.
double ssim(std::span<const double> original, std::span<const double> reconstructed, double L,
            double k1 = 0.01, double k2 = 0.03);

/// SSIM with L = max - min of the original.
double ssim(std::span<const double> original, std::span<const double> reconstructed);

/// Correlation metric; shares its implementation with registration.
std::optional<double> cc_metric(std::span<const double> original,
                                std::span<const double> reconstructed);

inline double dssim(double ssim_value) { return (1.0 - ssim_value) / 2.0; }

/// Origins of windows along one axis (stride steps plus a final edge-clamped window).
std::vector<int> metric_window_origins(int n, int window, int stride);

/// Mean SSIM over window x window blocks at the given stride.
double ssim_windowed(const Image2D& original, const Image2D& reconstructed, double L,
                     int window = 8, int stride = 4, double k1 = 0.01, double k2 = 0.03);

struct DssimMap {
  Image2D map;                  // per-pixel heat map
  std::vector<double> windows;  // per-window DSSIM
  double mean = 0.0;            // mean over windows
};

/// Per-window DSSIM assigned to window centres and bilinearly filled to pixel
/// resolution (clamped beyond the outermost centres). L defaults to the
/// original's max - min.
DssimMap dssim_map(const Image2D& original, const Image2D& reconstructed, int window = 8,
                   int stride = 4, std::optional<double> L = std::nullopt);

struct SliceMetrics {
  int stack = 0;
  int slice = 0;
  std::string region;
  double cc = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double dssim = 0.0;  // mean over the slice's DSSIM windows
};

struct MetricReport {
  std::string region = "whole";
  std::vector<SliceMetrics> slices;
  double cc = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double dssim = 0.0;
  /// One heat-map volume per stack (stack geometry), when requested.
  std::vector<Volume> dssim_maps;
};

struct EvaluateOptions {
  const Volume* mask = nullptr;  // region mask in reconstruction world space
  std::string region = "whole";
  int workers = 1;
  bool heat_maps = false;
};

/// Simulated image of every slice, assembled from the patches covering it:
/// each pixel is the mean of the simulations of the patches whose core holds
/// it. `observed` flags pixels with at least one observed simulation.
struct SimulatedSlice {
  int stack = 0;
  int slice = 0;
  Image2D image;
  std::vector<std::uint8_t> observed;
};
std::vector<SimulatedSlice> simulate_slices(const ForwardModel& model, const Volume& recon,
                                            std::span<const Patch> patches, int workers);

/// Compares every original slice with its simulation from the reconstruction
/// at the final patch poses. Slices without selected pixels or with a
/// constant original are skipped. Throws EmptyInputError when no pixel is
/// selected at all.
MetricReport evaluate_reconstruction(const ForwardModel& model, const Volume& recon,
                                     std::span<const Patch> patches,
                                     const EvaluateOptions& opts = {});

}  // namespace pvr
