#include "pvr/rigid_transform.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

namespace pvr {

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;
}

Eigen::Matrix3d euler_zyx_to_matrix(const Eigen::Vector3d& rotation_deg) {
  const Eigen::AngleAxisd rx(rotation_deg.x() * kDeg, Eigen::Vector3d::UnitX());
  const Eigen::AngleAxisd ry(rotation_deg.y() * kDeg, Eigen::Vector3d::UnitY());
  const Eigen::AngleAxisd rz(rotation_deg.z() * kDeg, Eigen::Vector3d::UnitZ());
  return (rz * ry * rx).toRotationMatrix();
}

Eigen::Vector3d matrix_to_euler_zyx(const Eigen::Matrix3d& r) {
  // R = Rz Ry Rx  =>  r(2,0) = -sin(ry)
  const double sy = std::clamp(-r(2, 0), -1.0, 1.0);
  const double ry = std::asin(sy);
  double rx = 0.0;
  double rz = 0.0;
  if (std::abs(sy) < 1.0 - 1e-12) {
    rx = std::atan2(r(2, 1), r(2, 2));
    rz = std::atan2(r(1, 0), r(0, 0));
  } else {
    // Gimbal lock: only rx - rz (or rx + rz) is defined; put it all on rx.
    rz = 0.0;
    rx = std::atan2(sy > 0 ? r(0, 1) : -r(0, 1), r(1, 1));
  }
  return Eigen::Vector3d(rx, ry, rz) / kDeg;
}

RigidTransform::RigidTransform(const Eigen::Vector3d& rotation_deg,
                               const Eigen::Vector3d& translation_mm)
    : rotation_(euler_zyx_to_matrix(rotation_deg)), translation_(translation_mm) {}

RigidTransform RigidTransform::about_center(const Eigen::Vector3d& rotation_deg,
                                            const Eigen::Vector3d& translation_mm,
                                            const Eigen::Vector3d& center) {
  RigidTransform t;
  t.rotation_ = euler_zyx_to_matrix(rotation_deg);
  t.translation_ = center - t.rotation_ * center + translation_mm;
  return t;
}

RigidTransform RigidTransform::from_matrix(const Eigen::Matrix4d& m) {
  return from_rotation(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
}

RigidTransform RigidTransform::from_rotation(const Eigen::Matrix3d& r, const Eigen::Vector3d& t) {
  RigidTransform out;
  out.rotation_ = r;
  out.translation_ = t;
  return out;
}

Eigen::Vector3d RigidTransform::rotation_deg() const { return matrix_to_euler_zyx(rotation_); }

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

std::array<double, 6> RigidTransform::params() const {
  const Eigen::Vector3d r = rotation_deg();
  return {r.x(), r.y(), r.z(), translation_.x(), translation_.y(), translation_.z()};
}

RigidTransform RigidTransform::inverse() const {
  const Eigen::Matrix3d rt = rotation_.transpose();
  return from_rotation(rt, -(rt * translation_));
}

RigidTransform RigidTransform::compose(const RigidTransform& rhs) const {
  return from_rotation(rotation_ * rhs.rotation_, rotation_ * rhs.translation_ + translation_);
}

double rotation_angle_between(const RigidTransform& a, const RigidTransform& b) {
  const Eigen::Matrix3d rel = a.rotation_matrix() * b.rotation_matrix().transpose();
  const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) / kDeg;
}

}  // namespace pvr
