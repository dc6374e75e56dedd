#pragma once

#include <array>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "pvr/patches.hpp"
#include "pvr/rigid_transform.hpp"
#include "pvr/stack.hpp"
#include "pvr/volume.hpp"

namespace pvr {

/// Multi-resolution coordinate-wise gradient ascent on cross correlation.
///
/// Level l starts with steps rotation_step / 2^l and translation_step / 2^l.
/// Each iteration estimates the gradient and curvature of every parameter by
/// central differences at the current step, then tries a diagonal Newton move
/// clamped to one step per parameter, falling back to one step along the
/// normalized gradient. A move is kept when it raises the similarity by more
/// than epsilon; otherwise both steps halve, up to `halvings` times.
struct RegistrationConfig {
  std::vector<double> blur_sigmas{2.0, 1.0, 0.0};  // voxels, one per level
  int max_iterations = 60;                         // per level
  double rotation_step = 4.0;                      // degrees
  double translation_step = 2.0;                   // mm
  int halvings = 5;
  double epsilon = 1e-6;
  int min_pixels = 32;
  /// Pixel subsampling stride used on levels whose blur sigma is >= 1.
  int coarse_stride = 2;
  /// Patches with fewer than min_foreground of their pixels above
  /// foreground_level keep their pose. A negative level disables the check;
  /// the pipeline replaces it with 5% of the stack intensity range.
  double foreground_level = -1.0;
  double min_foreground = 0.5;

  int levels() const { return static_cast<int>(blur_sigmas.size()); }
  void validate() const;
};

/// Blurred copies of a target volume, one per registration level.
class RegistrationPyramid {
 public:
  RegistrationPyramid(const Volume& target, const RegistrationConfig& cfg);
  const Volume& level(int l) const { return levels_[static_cast<std::size_t>(l)]; }
  int size() const { return static_cast<int>(levels_.size()); }

 private:
  std::vector<Volume> levels_;
};

/// (rx, ry, rz, tx, ty, tz): degrees and mm.
using RigidParams = std::array<double, 6>;

struct AscentResult {
  RigidParams params{};
  double value = 0.0;
  /// Objective after the start point and after every accepted move.
  std::vector<double> accepted;
  int evaluations = 0;
};

/// One level of the ascent described above. Returns the start when the objective is
/// undefined there.
AscentResult coordinate_ascent(const std::function<std::optional<double>(const RigidParams&)>& f,
                               const RigidParams& start, double rotation_step,
                               double translation_step, int max_iterations, int halvings,
                               double epsilon);

struct RegistrationResult {
  RigidTransform pose;
  double similarity = 0.0;
  bool registrable = true;
  std::vector<double> accepted;
};

/// Similarity of a patch at `pose` against a target: CC between the patch's
/// dilated pixels and trilinear samples at pose-mapped pixel positions.
/// nullopt when fewer than min_pixels samples are valid or CC is undefined.
std::optional<double> patch_similarity(const Patch& patch, const Stack& stack,
                                       const RigidTransform& pose, const Volume& target,
                                       int min_pixels = 32, int stride = 1);

/// Rigid 2D-3D registration of one patch, starting from its current pose.
/// Unregistrable patches (too few valid pixels, constant intensity) keep
/// their pose and are flagged.
RegistrationResult register_patch_to_volume(const Patch& patch, const Stack& stack,
                                            const RegistrationPyramid& target,
                                            const RegistrationConfig& cfg);
RegistrationResult register_patch_to_volume(const Patch& patch, const Stack& stack,
                                            const Volume& recon, const RegistrationConfig& cfg);

/// Global 3D-3D alignment of a whole stack (slice poses ignored) to a target
/// volume. The returned transform maps stack world to target world. Throws
/// RegistrationFailure when the valid overlap covers less than 10% of the
/// stack voxels.
RigidTransform register_stack_to_volume(const Stack& stack, const Volume& target,
                                        const RegistrationConfig& cfg,
                                        const RigidTransform& start = RigidTransform());

/// Composite pose for parameters applied about `center` after `base`.
RigidTransform apply_params(const RigidParams& p, const Eigen::Vector3d& center,
                            const RigidTransform& base);

}  // namespace pvr
