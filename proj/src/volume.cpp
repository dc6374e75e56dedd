#include "pvr/volume.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/LU>

#include "pvr/error.hpp"

namespace pvr {

void Geometry::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) throw GeometryError("volume dims must be >= 1");
    if (!(spacing[a] > 0.0)) throw GeometryError("volume spacing must be > 0");
  }
  const Eigen::Matrix3d gram = axes.transpose() * axes;
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6) {
    throw GeometryError("volume axes must be orthonormal");
  }
}

Eigen::Matrix4d Geometry::index_to_world() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = index_to_world_linear();
  m.topRightCorner<3, 1>() = origin;
  return m;
}

bool Geometry::operator==(const Geometry& o) const {
  return dims == o.dims && spacing == o.spacing && origin == o.origin && axes == o.axes;
}

Volume::Volume(const Geometry& geometry, double fill) : geometry_(geometry) {
  geometry_.validate();
  data_.assign(geometry_.voxel_count(), fill);
}

Volume::Volume(const Geometry& geometry, std::vector<double> data)
    : geometry_(geometry), data_(std::move(data)) {
  geometry_.validate();
  if (data_.size() != geometry_.voxel_count()) {
    std::ostringstream msg;
    msg << "volume data has " << data_.size() << " values, geometry needs "
        << geometry_.voxel_count();
    throw GeometryError(msg.str());
  }
}

double Volume::min_value() const {
  return data_.empty() ? 0.0 : *std::min_element(data_.begin(), data_.end());
}

double Volume::max_value() const {
  return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end());
}

namespace {

constexpr double kEdgeTol = 1e-9;

// Lower cell index and fraction along one axis; false when outside.
inline bool axis_cell(double x, int n, int& i0, double& f) {
  if (n == 1) {
    if (x < -0.5 || x > 0.5) return false;
    i0 = 0;
    f = 0.0;
    return true;
  }
  if (x < -kEdgeTol || x > (n - 1) + kEdgeTol) return false;
  x = std::clamp(x, 0.0, static_cast<double>(n - 1));
  i0 = std::min(static_cast<int>(x), n - 2);
  f = x - i0;
  return true;
}

}  // namespace

std::optional<double> sample_index(const Volume& v, const Eigen::Vector3d& index) {
  const auto& d = v.dims();
  int i[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    if (!axis_cell(index[a], d[a], i[a], f[a])) return std::nullopt;
  }
  const int sx = d[0] > 1 ? 1 : 0;
  const std::size_t sy = d[1] > 1 ? static_cast<std::size_t>(d[0]) : 0;
  const std::size_t sz = d[2] > 1 ? static_cast<std::size_t>(d[0]) * d[1] : 0;
  const std::size_t base = v.linear_index(i[0], i[1], i[2]);
  const auto data = v.data();
  const double c00 = data[base] * (1 - f[0]) + data[base + sx] * f[0];
  const double c10 = data[base + sy] * (1 - f[0]) + data[base + sy + sx] * f[0];
  const double c01 = data[base + sz] * (1 - f[0]) + data[base + sz + sx] * f[0];
  const double c11 = data[base + sz + sy] * (1 - f[0]) + data[base + sz + sy + sx] * f[0];
  const double c0 = c00 * (1 - f[1]) + c10 * f[1];
  const double c1 = c01 * (1 - f[1]) + c11 * f[1];
  return c0 * (1 - f[2]) + c1 * f[2];
}

std::optional<double> sample_trilinear(const Volume& v, const Eigen::Vector3d& world_point) {
  return sample_index(v, v.geometry().index(world_point));
}

ResampleResult resample(const Volume& src, const Geometry& target, const Eigen::Matrix4d& t) {
  target.validate();
  ResampleResult out{Volume(target), std::vector<std::uint8_t>(target.voxel_count(), 0)};
  const Geometry& sg = src.geometry();
  // target index -> source index, affine
  const Eigen::Matrix4d src_from_world = sg.index_to_world().inverse();
  const Eigen::Matrix4d m = src_from_world * t * target.index_to_world();
  const Eigen::Matrix3d lin = m.topLeftCorner<3, 3>();
  const Eigen::Vector3d off = m.topRightCorner<3, 1>();
  std::size_t n = 0;
  for (int k = 0; k < target.dims[2]; ++k) {
    for (int j = 0; j < target.dims[1]; ++j) {
      for (int i = 0; i < target.dims[0]; ++i, ++n) {
        const Eigen::Vector3d idx = lin * Eigen::Vector3d(i, j, k) + off;
        if (auto s = sample_index(src, idx)) {
          out.volume[n] = *s;
          out.valid[n] = 1;
        }
      }
    }
  }
  return out;
}

ResampleResult resample(const Volume& src, const Geometry& target, const RigidTransform& t) {
  return resample(src, target, t.matrix());
}

namespace {

void blur_axis(const std::vector<double>& in, std::vector<double>& out, const std::array<int, 3>& d,
               int axis, const std::vector<double>& kernel) {
  const int r = static_cast<int>(kernel.size()) / 2;
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? static_cast<std::size_t>(d[0])
                                                      : static_cast<std::size_t>(d[0]) * d[1];
  const int n = d[axis];
  std::size_t idx = 0;
  for (int k = 0; k < d[2]; ++k) {
    for (int j = 0; j < d[1]; ++j) {
      for (int i = 0; i < d[0]; ++i, ++idx) {
        const int pos = axis == 0 ? i : axis == 1 ? j : k;
        double acc = 0.0;
        double wsum = 0.0;
        const int lo = std::max(-r, -pos);
        const int hi = std::min(r, n - 1 - pos);
        for (int o = lo; o <= hi; ++o) {
          const double w = kernel[static_cast<std::size_t>(o + r)];
          acc += w * in[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(idx) +
                                                 o * static_cast<std::ptrdiff_t>(stride))];
          wsum += w;
        }
        out[idx] = acc / wsum;
      }
    }
  }
}

}  // namespace

Volume gaussian_blur(const Volume& v, double sigma_voxels) {
  if (sigma_voxels <= 0.0) return v;
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma_voxels)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * r + 1));
  for (int o = -r; o <= r; ++o) {
    kernel[static_cast<std::size_t>(o + r)] = std::exp(-0.5 * o * o / (sigma_voxels * sigma_voxels));
  }
  std::vector<double> a(v.data().begin(), v.data().end());
  std::vector<double> b(a.size());
  for (int axis = 0; axis < 3; ++axis) {
    if (v.dims()[axis] == 1) continue;
    blur_axis(a, b, v.dims(), axis, kernel);
    std::swap(a, b);
  }
  return Volume(v.geometry(), std::move(a));
}

}  // namespace pvr
