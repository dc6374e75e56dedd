#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pvr/rigid_transform.hpp"
#include "pvr/stack.hpp"

namespace pvr {

/// Arbitrary-shaped 2D pixel subset of one slice.
///
/// `core` is the undilated set, `pixels` the dilated set (core grown by
/// `margin` pixels with an 8-connected structuring element, clipped to the
/// slice). Both hold sorted linear slice indices (x + y * nx).
struct Patch {
  int id = 0;
  int stack = 0;
  int slice = 0;
  int scale_index = 0;
  int slice_nx = 0;
  int slice_ny = 0;
  int margin = 0;
  /// Bounding box of the dilated set, inclusive-exclusive.
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  std::vector<std::uint32_t> core;
  std::vector<std::uint32_t> pixels;

  RigidTransform pose;
  /// Posterior per entry of `pixels`.
  std::vector<double> posterior;
  double score = 1.0;
  bool excluded = false;
  bool registrable = true;
  double similarity = 0.0;

  int pixel_x(std::size_t n) const { return static_cast<int>(pixels[n] % static_cast<std::uint32_t>(slice_nx)); }
  int pixel_y(std::size_t n) const { return static_cast<int>(pixels[n] / static_cast<std::uint32_t>(slice_nx)); }
};

enum class PatchShape { square, superpixel, whole_slice };

const char* to_string(PatchShape s);
PatchShape parse_patch_shape(const std::string& s);

/// Dilation margin, either absolute pixels or a percentage of the patch size.
struct Dilation {
  double value = 0.0;
  bool percent = false;

  /// Pixels for patch size a; percentages round half-up.
  int resolve(int a) const;
  static Dilation parse(const std::string& s);
  std::string str() const;
};

struct PatchPlan {
  PatchShape shape = PatchShape::square;
  int size = 32;            // a
  int stride = 16;          // omega, square only
  Dilation dilation{};      // gamma
  double compactness = 10;  // t, superpixel only, intensity units
  bool multiscale = false;
  std::vector<double> scales;  // one per iteration, each in (0, 1]

  void validate() const;
  /// Geometric schedule 1, 0.75, 0.75^2, ... of the given length.
  static std::vector<double> default_scales(int iterations);
};

/// Grows a pixel set by `margin` with an 8-connected element, clipped to the slice.
std::vector<std::uint32_t> dilate_pixels(std::span<const std::uint32_t> core, int nx, int ny,
                                         int margin);

/// Window origins along one axis: 0, w, 2w, ... plus a final window clamped
/// to the edge when (n - a) is not a multiple of w.
std::vector<int> window_origins(int n, int a, int stride);

/// Axis-aligned a x a windows at stride omega. Throws ParameterError when a
/// exceeds a slice dimension or omega is outside [1, a].
std::vector<Patch> extract_square(const SliceView& slice, int a, int stride, int margin);

/// One patch spanning the whole slice (slice-to-volume mode).
Patch whole_slice_patch(const SliceView& slice);

struct SlicOptions {
  int max_iterations = 10;
  double min_motion = 0.5;  // px
  bool enforce_connectivity = true;
};

struct SlicResult {
  std::vector<int> labels;  // per pixel
  int label_count = 0;
  std::vector<double> cost;  // sum of D after each assignment step
  int iterations = 0;
  /// Final cluster centres (x, y, intensity).
  std::vector<std::array<double, 3>> centers;
};

/// Seed centres of the regular a-grid used to initialize SLIC.
std::vector<std::array<double, 2>> slic_seeds(int nx, int ny, int a);

/// SLIC clustering with D = sqrt(dc^2 + (ds / a)^2 t^2).
SlicResult slic(const SliceView& slice, int a, double t, const SlicOptions& opts = {});

/// SLIC superpixels, each grown by `margin` pixels.
std::vector<Patch> extract_superpixels(const SliceView& slice, int a, double t, int margin,
                                       const SlicOptions& opts = {});

/// Patch size used at `iteration` (multiscale: round(scale * a), at least 8).
int effective_patch_size(const PatchPlan& plan, int iteration);

/// Extracts patches of every slice of every stack for one iteration. Patch
/// ids are sequential in (stack, slice, patch) order and poses start at the
/// slice pose. Slices are processed concurrently.
std::vector<Patch> plan_iteration(const PatchPlan& plan, int iteration,
                                  const std::vector<Stack>& stacks, int workers = 1);

struct OverheadReport {
  std::size_t patch_count = 0;
  std::size_t dilated_pixels = 0;
  std::size_t slice_pixels = 0;
  double overhead_pct = 0.0;
};

/// M and 100 * (sum of dilated patch sizes - distinct slice pixels) / distinct
/// slice pixels, counting every slice that contributes at least one patch.
OverheadReport overhead_report(std::span<const Patch> patches);

}  // namespace pvr
