#pragma once

#include <array>

#include <Eigen/Core>

namespace pvr {

/// Six degree-of-freedom rigid body transform.
///
/// Rotation is stored as Euler angles in degrees using the intrinsic Z-Y-X
/// convention: R = Rz(rz) * Ry(ry) * Rx(rx). Translation is in millimetres.
/// apply(p) = R * p + t.
class RigidTransform {
 public:
  RigidTransform() = default;
  RigidTransform(const Eigen::Vector3d& rotation_deg, const Eigen::Vector3d& translation_mm);

  static RigidTransform identity() { return {}; }

  /// Rotation by `rotation_deg` about `center`, followed by translation:
  /// p -> R (p - c) + c + t.
  static RigidTransform about_center(const Eigen::Vector3d& rotation_deg,
                                     const Eigen::Vector3d& translation_mm,
                                     const Eigen::Vector3d& center);

  /// Builds from a 4x4 homogeneous matrix. The upper-left block must be a
  /// proper rotation (orthonormal, det +1); it is not re-orthogonalized.
  static RigidTransform from_matrix(const Eigen::Matrix4d& m);
  static RigidTransform from_rotation(const Eigen::Matrix3d& r, const Eigen::Vector3d& t);

  Eigen::Vector3d rotation_deg() const;
  const Eigen::Vector3d& translation() const { return translation_; }
  const Eigen::Matrix3d& rotation_matrix() const { return rotation_; }
  Eigen::Matrix4d matrix() const;

  /// (rx, ry, rz, tx, ty, tz)
  std::array<double, 6> params() const;

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation_ * p + translation_; }

  RigidTransform inverse() const;

  /// this ∘ rhs, i.e. rhs is applied first.
  RigidTransform compose(const RigidTransform& rhs) const;

 private:
  Eigen::Matrix3d rotation_ = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation_ = Eigen::Vector3d::Zero();
};

Eigen::Matrix3d euler_zyx_to_matrix(const Eigen::Vector3d& rotation_deg);
Eigen::Vector3d matrix_to_euler_zyx(const Eigen::Matrix3d& r);

/// Angle of the relative rotation a * b^T, in degrees.
double rotation_angle_between(const RigidTransform& a, const RigidTransform& b);

}  // namespace pvr
