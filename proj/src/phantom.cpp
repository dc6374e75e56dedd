#include "pvr/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "pvr/error.hpp"
#include "pvr/nifti.hpp"

namespace pvr {

void SkewParams::validate() const {
  if (!(std::abs(theta_deg) < 90.0)) throw ParameterError("skew theta must satisfy |theta| < 90 degrees");
  if (interleave_period < 1) throw ParameterError("interleave period must be >= 1");
  for (int s : signs) {
    if (s != 1 && s != -1) throw ParameterError("skew signs must be +1 or -1");
  }
}

std::array<int, 6> default_sign_pattern(int index) {
  static constexpr std::array<std::array<int, 6>, 3> kPatterns{{
      {1, 1, 1, 1, 1, 1},
      {1, -1, -1, 1, 1, -1},
      {-1, 1, 1, -1, -1, 1},
  }};
  const auto n = static_cast<int>(kPatterns.size());
  return kPatterns[static_cast<std::size_t>(((index % n) + n) % n)];
}

Eigen::Matrix4d skew_matrix(const SkewParams& p) {
  p.validate();
  const double t = std::tan(p.theta_deg * std::numbers::pi / 180.0);
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  // Sxy, Sxz, Syx, Syz, Szx, Szy
  m(0, 1) = p.signs[0] * t;
  m(0, 2) = p.signs[1] * t;
  m(1, 0) = p.signs[2] * t;
  m(1, 2) = p.signs[3] * t;
  m(2, 0) = p.signs[4] * t;
  m(2, 1) = p.signs[5] * t;
  return m;
}

Volume skew_volume(const Volume& gt, const SkewParams& p) {
  const Eigen::Matrix4d s = skew_matrix(p);
  if (p.theta_deg == 0.0) return gt;
  const Eigen::Vector3d c = gt.geometry().center();
  Eigen::Matrix4d about = s;
  about.topRightCorner<3, 1>() = c - s.topLeftCorner<3, 3>() * c;
  return resample(gt, gt.geometry(), about).volume;
}

Volume skew_octant(const Volume& gt, const SkewParams& p, int octant) {
  if (octant < 0 || octant > 7) throw ParameterError("octant must be in [0, 7]");
  const Volume skewed = skew_volume(gt, p);
  Volume out = gt;
  const auto& d = gt.dims();
  for (int k = 0; k < d[2]; ++k) {
    const bool hz = 2 * k >= d[2];
    if (hz != ((octant & 4) != 0)) continue;
    for (int j = 0; j < d[1]; ++j) {
      const bool hy = 2 * j >= d[1];
      if (hy != ((octant & 2) != 0)) continue;
      for (int i = 0; i < d[0]; ++i) {
        const bool hx = 2 * i >= d[0];
        if (hx != ((octant & 1) != 0)) continue;
        const std::size_t n = gt.linear_index(i, j, k);
        out[n] = skewed[n];
      }
    }
  }
  return out;
}

Geometry stack_geometry(const Geometry& fov, Orientation o, const Eigen::Vector3d& out_spacing) {
  fov.validate();
  Geometry g;
  g.axes = fov.axes * orientation_axes(o);
  g.spacing = out_spacing;
  const Eigen::Vector3d extent(fov.dims[0] * fov.spacing.x(), fov.dims[1] * fov.spacing.y(),
                               fov.dims[2] * fov.spacing.z());
  const Eigen::Matrix3d local = orientation_axes(o);
  for (int a = 0; a < 3; ++a) {
    const double e = local.col(a).cwiseAbs().dot(extent);
    g.dims[static_cast<std::size_t>(a)] = std::max(1, static_cast<int>(std::floor(e / out_spacing[a] + 1e-9)));
  }
  const Eigen::Vector3d half((g.dims[0] - 1) * 0.5, (g.dims[1] - 1) * 0.5, (g.dims[2] - 1) * 0.5);
  g.origin = fov.center() - g.axes * out_spacing.cwiseProduct(half);
  g.validate();
  return g;
}

std::vector<double> sample_stack_slice(const Volume& source, const Geometry& stack_geom, int k) {
  std::vector<double> out(static_cast<std::size_t>(stack_geom.dims[0]) * stack_geom.dims[1], 0.0);
  std::size_t n = 0;
  for (int y = 0; y < stack_geom.dims[1]; ++y) {
    for (int x = 0; x < stack_geom.dims[0]; ++x, ++n) {
      if (auto v = sample_trilinear(source, stack_geom.world(Eigen::Vector3d(x, y, k)))) out[n] = *v;
    }
  }
  return out;
}

Stack interleave_stack(const Volume& skewed, const Volume& clean, int period, Orientation o,
                       const Eigen::Vector3d& out_spacing) {
  if (period < 1) throw ParameterError("interleave period must be >= 1");
  const Geometry g = stack_geometry(clean.geometry(), o, out_spacing);
  std::vector<double> data;
  data.reserve(g.voxel_count());
  for (int k = 0; k < g.dims[2]; ++k) {
    const bool from_skewed = (k / period) % 2 == 0;
    const auto s = sample_stack_slice(from_skewed ? skewed : clean, g, k);
    data.insert(data.end(), s.begin(), s.end());
  }
  return Stack(Volume(g, std::move(data)), out_spacing.z(), period);
}

Stack corrupt_stack(const Volume& gt, const SkewParams& p, Orientation o,
                    const Eigen::Vector3d& out_spacing) {
  p.validate();
  return interleave_stack(skew_volume(gt, p), gt, p.interleave_period, o, out_spacing);
}

void add_noise(Stack& stack, double sigma, unsigned seed) {
  if (sigma < 0.0) throw ParameterError("noise sigma must be >= 0");
  if (sigma == 0.0) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (double& v : stack.image().data()) v += noise(rng);
}

namespace {

struct Ellipsoid {
  Eigen::Vector3d center;  // fraction of the half extent
  Eigen::Vector3d radii;   // fraction of the half extent
  double level;
  double fold = 0.0;  // relative amplitude of the gyral surface modulation
};

// Radius scale of a folded surface along normalized direction d.
double fold_factor(const Eigen::Vector3d& d, double amplitude) {
  if (amplitude == 0.0) return 1.0;
  const double r = d.norm();
  if (r == 0.0) return 1.0;
  const double azimuth = std::atan2(d.y(), d.x());
  const double elevation = std::asin(std::clamp(d.z() / r, -1.0, 1.0));
  return 1.0 + amplitude * std::sin(9.0 * azimuth) * std::cos(7.0 * elevation + 0.6);
}

// Painted in order; later shapes overwrite earlier ones. Shapes are evaluated
// at |x|, so each off-centre shape also appears mirrored at -x.
const std::vector<Ellipsoid>& phantom_shapes() {
  static const std::vector<Ellipsoid> shapes = [] {
    std::vector<Ellipsoid> s{
        {{0.0, 0.0, 0.0}, {0.78, 0.86, 0.72}, 0.35},    // outer shell
        {{0.0, 0.0, 0.0}, {0.70, 0.78, 0.64}, 0.65, 0.07},  // folded parenchyma
        {{0.0, 0.08, 0.05}, {0.40, 0.46, 0.34}, 0.5, 0.12},  // folded inner region
        {{0.0, -0.45, -0.2}, {0.16, 0.14, 0.12}, 0.9},  // midline structure
        {{0.0, 0.5, 0.3}, {0.10, 0.08, 0.16}, 0.2},
    };
    const std::vector<Ellipsoid> lateral{
        {{0.18, 0.05, 0.1}, {0.08, 0.26, 0.1}, 1.0},   // ventricles
        {{0.42, 0.25, -0.25}, {0.10, 0.12, 0.10}, 0.8},
        {{0.35, -0.35, 0.25}, {0.07, 0.09, 0.08}, 0.25},
        {{0.28, 0.45, -0.05}, {0.06, 0.06, 0.12}, 0.9},
        {{0.48, -0.05, 0.2}, {0.05, 0.14, 0.06}, 0.3},
        {{0.22, -0.2, -0.4}, {0.09, 0.07, 0.06}, 0.85},
        {{0.55, 0.1, -0.05}, {0.05, 0.05, 0.05}, 0.2},
        {{0.12, 0.3, 0.42}, {0.06, 0.08, 0.05}, 0.8},
        {{0.3, -0.55, 0.0}, {0.06, 0.05, 0.09}, 0.3},
    };
    s.insert(s.end(), lateral.begin(), lateral.end());
    // Small structures scattered through the parenchyma give patches local
    // texture to register against. Fixed seed, so the phantom never changes.
    const double levels[] = {0.2, 0.3, 0.8, 0.9, 1.0, 0.35};
    std::mt19937_64 rng(20170415);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int n = 0; n < 48; ++n) {
      Eigen::Vector3d c;
      do {
        c = Eigen::Vector3d(0.62 * unit(rng), 1.24 * unit(rng) - 0.62, 1.0 * unit(rng) - 0.5);
      } while ((c.cwiseQuotient(Eigen::Vector3d(0.64, 0.72, 0.56))).norm() > 1.0);
      const Eigen::Vector3d r(0.03 + 0.05 * unit(rng), 0.03 + 0.05 * unit(rng), 0.03 + 0.05 * unit(rng));
      s.push_back({c, r, levels[n % 6]});
    }
    return s;
  }();
  return shapes;
}

}  // namespace

std::vector<double> phantom_levels() {
  std::vector<double> levels;
  for (const auto& e : phantom_shapes()) {
    if (std::find(levels.begin(), levels.end(), e.level) == levels.end()) levels.push_back(e.level);
  }
  std::sort(levels.begin(), levels.end());
  return levels;
}

Volume make_phantom(const PhantomSpec& spec) {
  if (spec.kind == PhantomKind::loaded) return read_nifti(spec.path);
  if (spec.size < 8) throw ParameterError("phantom size must be >= 8");
  if (!(spec.spacing > 0.0)) throw ParameterError("phantom spacing must be > 0");

  Geometry g;
  g.dims = {spec.size, spec.size, spec.size};
  g.spacing = Eigen::Vector3d::Constant(spec.spacing);
  g.origin = Eigen::Vector3d::Constant(-(spec.size - 1) * 0.5 * spec.spacing);
  Volume v(g);

  const double half = spec.size * 0.5 * spec.spacing;
  constexpr double kEdgeMm = 0.5;  // logistic edge width
  const auto& shapes = phantom_shapes();
  const int n = spec.size;
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        const double c = (n - 1) * 0.5;
        const Eigen::Vector3d p(std::abs(i - c) * spec.spacing, (j - c) * spec.spacing,
                                (k - c) * spec.spacing);
        double value = 0.0;
        for (const auto& e : shapes) {
          const Eigen::Vector3d radii = e.radii * half;
          const Eigen::Vector3d d = (p - e.center * half).cwiseQuotient(radii);
          // Logistic edge, scaled so the centre is fully occupied.
          const double k = radii.minCoeff() / kEdgeMm;
          const double occupancy = (1.0 + std::exp(-k)) /
                                   (1.0 + std::exp((d.norm() / fold_factor(d, e.fold) - 1.0) * k));
          value = value * (1.0 - occupancy) + e.level * occupancy;
        }
        v.at(i, j, k) = value;
      }
    }
  }
  return v;
}

}  // namespace pvr
