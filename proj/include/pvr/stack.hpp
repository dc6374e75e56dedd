#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pvr/rigid_transform.hpp"
#include "pvr/volume.hpp"

namespace pvr {

enum class Orientation { axial, coronal, sagittal };

const char* to_string(Orientation o);
Orientation parse_orientation(const std::string& s);

/// Column axes (in-plane x, in-plane y, slice normal) of a standard orientation.
Eigen::Matrix3d orientation_axes(Orientation o);

/// Read-only view of one 2D slice.
struct SliceView {
  int nx = 0;
  int ny = 0;
  std::span<const double> data;

  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * nx + x]; }
};

/// Ordered set of parallel 2D slices acquired with a common in-plane geometry.
///
/// The image volume carries the nominal acquisition geometry (slice index is
/// the third dimension); each slice additionally owns a rigid pose mapping
/// its nominal world position into the reconstruction frame.
class Stack {
 public:
  Stack() = default;
  /// Slice thickness defaults to the through-plane spacing; all slice poses
  /// start at identity.
  explicit Stack(Volume image, double thickness = 0.0, int interleave = 1);

  const Volume& image() const { return image_; }
  Volume& image() { return image_; }
  const Geometry& geometry() const { return image_.geometry(); }

  int nx() const { return image_.dims()[0]; }
  int ny() const { return image_.dims()[1]; }
  int slice_count() const { return image_.dims()[2]; }
  double thickness() const { return thickness_; }
  int interleave() const { return interleave_; }

  SliceView slice(int k) const;

  /// Nominal (pre-pose) world position of pixel (x, y) in slice k.
  Eigen::Vector3d pixel_world(double x, double y, int k) const {
    return image_.geometry().world(Eigen::Vector3d(x, y, k));
  }

  const RigidTransform& slice_pose(int k) const { return poses_[static_cast<std::size_t>(k)]; }
  void set_slice_pose(int k, const RigidTransform& t) { poses_[static_cast<std::size_t>(k)] = t; }
  /// Assigns the same pose to every slice.
  void set_stack_pose(const RigidTransform& t);

 private:
  Volume image_;
  double thickness_ = 0.0;
  int interleave_ = 1;
  std::vector<RigidTransform> poses_;
};

}  // namespace pvr
