#include "pvr/stack.hpp"

#include <algorithm>
#include <cctype>

#include "pvr/error.hpp"

namespace pvr {

const char* to_string(Orientation o) {
  switch (o) {
    case Orientation::axial: return "axial";
    case Orientation::coronal: return "coronal";
    case Orientation::sagittal: return "sagittal";
  }
  return "axial";
}

Orientation parse_orientation(const std::string& s) {
  std::string l(s);
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "axial") return Orientation::axial;
  if (l == "coronal") return Orientation::coronal;
  if (l == "sagittal") return Orientation::sagittal;
  throw ParameterError("unknown orientation: " + s);
}

Eigen::Matrix3d orientation_axes(Orientation o) {
  Eigen::Matrix3d a;
  switch (o) {
    case Orientation::axial:
      a << 1, 0, 0,
           0, 1, 0,
           0, 0, 1;
      break;
    case Orientation::coronal:
      // columns: x, z, -y
      a << 1, 0, 0,
           0, 0, -1,
           0, 1, 0;
      break;
    case Orientation::sagittal:
      // columns: y, z, x
      a << 0, 0, 1,
           1, 0, 0,
           0, 1, 0;
      break;
  }
  return a;
}

Stack::Stack(Volume image, double thickness, int interleave)
    : image_(std::move(image)),
      thickness_(thickness > 0.0 ? thickness : image_.geometry().spacing.z()),
      interleave_(std::max(1, interleave)),
      poses_(static_cast<std::size_t>(image_.dims()[2])) {
  if (image_.size() == 0) throw EmptyInputError("stack has no voxels");
}

SliceView Stack::slice(int k) const {
  const std::size_t n = static_cast<std::size_t>(nx()) * ny();
  return {nx(), ny(), image_.data().subspan(n * static_cast<std::size_t>(k), n)};
}

void Stack::set_stack_pose(const RigidTransform& t) {
  std::fill(poses_.begin(), poses_.end(), t);
}

}  // namespace pvr
