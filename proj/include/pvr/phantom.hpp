#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "pvr/stack.hpp"
#include "pvr/volume.hpp"

namespace pvr {

/// Shear corruption of a volume. Every off-diagonal entry of the 3x3 block is
/// tan(sign_i * theta).
struct SkewParams {
  double theta_deg = 0.0;
  /// Order: Sxy, Sxz, Syx, Syz, Szx, Szy. Entries are +1 or -1.
  std::array<int, 6> signs{1, 1, 1, 1, 1, 1};
  int interleave_period = 1;

  void validate() const;
};

/// Sign pattern used for stack `index` when corrupting several stacks so they
/// do not share the same wrong geometry.
std::array<int, 6> default_sign_pattern(int index);

/// 4x4 affine with unit diagonal, shear entries tan(±theta) and last row (0,0,0,1).
/// Throws ParameterError when |theta| >= 90.
Eigen::Matrix4d skew_matrix(const SkewParams& p);

/// Skewed copy of `gt` about its centre: out(x) = gt(c + S (x - c)).
Volume skew_volume(const Volume& gt, const SkewParams& p);

/// Copy of `gt` whose voxels inside one octant (bit 0: x high half, bit 1: y,
/// bit 2: z) come from the skewed volume and elsewhere from `gt`.
Volume skew_octant(const Volume& gt, const SkewParams& p, int octant);

/// Stack geometry covering the field of view of `fov` in a standard orientation.
Geometry stack_geometry(const Geometry& fov, Orientation o, const Eigen::Vector3d& out_spacing);

/// Point-samples slice k of a stack geometry from `source`.
std::vector<double> sample_stack_slice(const Volume& source, const Geometry& stack_geom, int k);

/// Interleaves slices: slice k comes from `skewed` when (k / period) is even,
/// otherwise from `clean`.
Stack interleave_stack(const Volume& skewed, const Volume& clean, int period, Orientation o,
                       const Eigen::Vector3d& out_spacing);

/// Motion-corrupted stack: skewed copy of gt interleaved with gt itself.
/// Default spacing 1.25 x 1.25 x 2.5 mm.
Stack corrupt_stack(const Volume& gt, const SkewParams& p, Orientation o,
                    const Eigen::Vector3d& out_spacing = Eigen::Vector3d(1.25, 1.25, 2.5));

/// Adds zero-mean Gaussian noise with standard deviation sigma (fixed seed).
void add_noise(Stack& stack, double sigma, unsigned seed);

enum class PhantomKind { geometric, loaded };

struct PhantomSpec {
  PhantomKind kind = PhantomKind::geometric;
  int size = 64;
  double spacing = 1.0;
  std::filesystem::path path;  // for loaded
};

/// Intensity plateaus used by the geometric phantom, background excluded.
std::vector<double> phantom_levels();

/// Geometric phantom: nested ellipsoid shells with smooth edges, mirror
/// symmetric about the x mid-plane. `loaded` reads the given NIfTI file.
Volume make_phantom(const PhantomSpec& spec);

}  // namespace pvr
