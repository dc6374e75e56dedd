#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "pvr/rigid_transform.hpp"

namespace pvr {

/// Voxel grid placement in world space (mm).
///
/// world(index) = origin + axes * diag(spacing) * index
struct Geometry {
  std::array<int, 3> dims{1, 1, 1};
  Eigen::Vector3d spacing{1.0, 1.0, 1.0};
  Eigen::Vector3d origin{0.0, 0.0, 0.0};
  Eigen::Matrix3d axes = Eigen::Matrix3d::Identity();

  /// Throws GeometryError when dims < 1, spacing <= 0 or axes are not
  /// orthonormal within 1e-6.
  void validate() const;

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  Eigen::Matrix3d index_to_world_linear() const { return axes * spacing.asDiagonal(); }
  Eigen::Vector3d world(const Eigen::Vector3d& index) const {
    return origin + axes * spacing.cwiseProduct(index);
  }
  /// Continuous index of a world point.
  Eigen::Vector3d index(const Eigen::Vector3d& world) const {
    return (axes.transpose() * (world - origin)).cwiseQuotient(spacing);
  }
  Eigen::Vector3d center() const {
    return world(Eigen::Vector3d((dims[0] - 1) * 0.5, (dims[1] - 1) * 0.5, (dims[2] - 1) * 0.5));
  }
  Eigen::Matrix4d index_to_world() const;

  bool operator==(const Geometry& o) const;
};

/// Scalar 3D image. Storage is x-fastest, then y, then z.
class Volume {
 public:
  Volume() = default;
  explicit Volume(const Geometry& geometry, double fill = 0.0);
  Volume(const Geometry& geometry, std::vector<double> data);

  const Geometry& geometry() const { return geometry_; }
  const std::array<int, 3>& dims() const { return geometry_.dims; }
  std::size_t size() const { return data_.size(); }

  std::size_t linear_index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(geometry_.dims[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(geometry_.dims[1]) * k);
  }
  double& at(int i, int j, int k) { return data_[linear_index(i, j, k)]; }
  double at(int i, int j, int k) const { return data_[linear_index(i, j, k)]; }
  double& operator[](std::size_t n) { return data_[n]; }
  double operator[](std::size_t n) const { return data_[n]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }

  double min_value() const;
  double max_value() const;

 private:
  Geometry geometry_;
  std::vector<double> data_;
};

/// Dense 2D scalar grid, x-fastest.
struct Image2D {
  int nx = 0;
  int ny = 0;
  std::vector<double> data;

  Image2D() = default;
  Image2D(int width, int height, double fill = 0.0)
      : nx(width), ny(height), data(static_cast<std::size_t>(width) * height, fill) {}
  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * nx + x]; }
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * nx + x]; }
};

/// Trilinear sample at a continuous voxel index. Returns nullopt when the
/// index is outside [0, n-1] on any axis (an axis with one voxel accepts
/// [-0.5, 0.5]).
std::optional<double> sample_index(const Volume& v, const Eigen::Vector3d& index);

/// Trilinear interpolation of the eight enclosing voxels; absent outside the
/// grid's bounding box.
std::optional<double> sample_trilinear(const Volume& v, const Eigen::Vector3d& world_point);

struct ResampleResult {
  Volume volume;
  std::vector<std::uint8_t> valid;  // 1 where the source sample existed
};

/// Each target voxel x holds sample_trilinear(src, t(world(x))). Absent
/// samples become 0 and are flagged invalid.
ResampleResult resample(const Volume& src, const Geometry& target, const RigidTransform& t);

/// General affine variant (4x4 homogeneous map from target world to source world).
ResampleResult resample(const Volume& src, const Geometry& target, const Eigen::Matrix4d& t);

/// Separable Gaussian blur, sigma in voxels (per axis the same). sigma <= 0
/// returns a copy. Edges are handled by renormalizing the truncated kernel.
Volume gaussian_blur(const Volume& v, double sigma_voxels);

}  // namespace pvr
