#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "pvr/error.hpp"
#include "pvr/nifti.hpp"
#include "pvr/phantom.hpp"

using namespace pvr;

namespace {

bool same_source(const Stack& s, int k, const Volume& source) {
  const std::vector<double> expect = sample_stack_slice(source, s.geometry(), k);
  const SliceView view = s.slice(k);
  for (std::size_t n = 0; n < expect.size(); ++n) {
    if (view.data[n] != expect[n]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("skew matrix entries") {
  SkewParams p;
  CHECK(skew_matrix(p) == Eigen::Matrix4d::Identity());

  p.theta_deg = 45.0;
  const Eigen::Matrix4d m45 = skew_matrix(p);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) CHECK(m45(r, c) == doctest::Approx(1.0));

  p.theta_deg = 8.0;
  p.signs = {1, -1, 1, -1, 1, -1};
  const Eigen::Matrix4d m = skew_matrix(p);
  const double t = std::tan(8.0 * M_PI / 180.0);
  CHECK(t == doctest::Approx(0.140541).epsilon(1e-6));
  CHECK(m(0, 1) == doctest::Approx(t));
  CHECK(m(0, 2) == doctest::Approx(-t));
  CHECK(m(1, 0) == doctest::Approx(t));
  CHECK(m(1, 2) == doctest::Approx(-t));
  CHECK(m(2, 0) == doctest::Approx(t));
  CHECK(m(2, 1) == doctest::Approx(-t));
  for (int i = 0; i < 4; ++i) CHECK(m(i, i) == 1.0);
  CHECK(m.row(3) == Eigen::RowVector4d(0, 0, 0, 1));
}

TEST_CASE("skew parameter validation") {
  SkewParams p;
  p.theta_deg = 90.0;
  CHECK_THROWS_AS(skew_matrix(p), ParameterError);
  p.theta_deg = -95.0;
  CHECK_THROWS_AS(p.validate(), ParameterError);
  p.theta_deg = 4.0;
  p.interleave_period = 0;
  CHECK_THROWS_AS(p.validate(), ParameterError);
  p.interleave_period = 1;
  p.signs[2] = 0;
  CHECK_THROWS_AS(p.validate(), ParameterError);
}

TEST_CASE("default sign patterns differ between stacks") {
  CHECK(default_sign_pattern(0) != default_sign_pattern(1));
  CHECK(default_sign_pattern(1) != default_sign_pattern(2));
  CHECK(default_sign_pattern(0) != default_sign_pattern(2));
  CHECK(default_sign_pattern(3) == default_sign_pattern(0));
}

TEST_CASE("geometric phantom") {
  PhantomSpec spec;
  spec.size = 64;
  const Volume v = make_phantom(spec);
  CHECK(v.dims() == std::array<int, 3>{64, 64, 64});
  CHECK(v.geometry().spacing == Eigen::Vector3d(1, 1, 1));

  SUBCASE("mirror symmetric about the x mid-plane") {
    for (int k = 0; k < 64; ++k)
      for (int j = 0; j < 64; ++j)
        for (int i = 0; i < 64; ++i) REQUIRE(v.at(i, j, k) == v.at(63 - i, j, k));
  }
  SUBCASE("every configured level is present as a plateau") {
    for (double level : phantom_levels()) {
      std::size_t hits = 0;
      for (double x : v.data()) hits += std::abs(x - level) < 0.01 ? 1 : 0;
      INFO("level " << level);
      CHECK(hits >= 1);
    }
  }
  SUBCASE("background is empty") {
    CHECK(v.at(0, 0, 0) < 1e-6);
    CHECK(v.max_value() <= 1.0 + 1e-12);
  }
}

TEST_CASE("loaded phantom keeps the file header") {
  Geometry g;
  g.dims = {6, 7, 8};
  g.spacing = {0.8, 0.9, 1.7};
  Volume v(g, 0.5);
  const auto path = std::filesystem::temp_directory_path() / "pvr_loaded_phantom.nii";
  write_nifti(path, v);
  PhantomSpec spec;
  spec.kind = PhantomKind::loaded;
  spec.path = path;
  const Volume r = make_phantom(spec);
  CHECK(r.dims() == g.dims);
  CHECK((r.geometry().spacing - g.spacing).norm() < 1e-6);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(make_phantom(spec), IoError);
}

TEST_CASE("corrupt_stack") {
  PhantomSpec spec;
  spec.size = 40;
  const Volume gt = make_phantom(spec);

  SUBCASE("theta 0 is a plain resampling") {
    SkewParams p;
    const Stack s = corrupt_stack(gt, p, Orientation::axial);
    CHECK(s.geometry().spacing.isApprox(Eigen::Vector3d(1.25, 1.25, 2.5)));
    for (int k = 0; k < s.slice_count(); ++k) CHECK(same_source(s, k, gt));
  }
  SUBCASE("interleave period 1 alternates skewed and clean slices") {
    SkewParams p;
    p.theta_deg = 4.0;
    const Volume skewed = skew_volume(gt, p);
    const Stack s = corrupt_stack(gt, p, Orientation::coronal);
    for (int k = 0; k < s.slice_count(); ++k) {
      INFO("slice " << k);
      CHECK(same_source(s, k, k % 2 == 0 ? skewed : gt));
      CHECK_FALSE(same_source(s, k, k % 2 == 0 ? gt : skewed));
    }
  }
  SUBCASE("interleave period 2") {
    SkewParams p;
    p.theta_deg = 6.0;
    p.interleave_period = 2;
    const Volume skewed = skew_volume(gt, p);
    const Stack s = corrupt_stack(gt, p, Orientation::sagittal);
    for (int k = 0; k < s.slice_count(); ++k) CHECK(same_source(s, k, (k / 2) % 2 == 0 ? skewed : gt));
  }
  SUBCASE("three orientations have orthogonal slice normals") {
    SkewParams p;
    std::vector<Eigen::Vector3d> normals;
    for (Orientation o : {Orientation::axial, Orientation::coronal, Orientation::sagittal}) {
      normals.push_back(corrupt_stack(gt, p, o).geometry().axes.col(2));
    }
    CHECK(std::abs(normals[0].dot(normals[1])) < 1e-12);
    CHECK(std::abs(normals[0].dot(normals[2])) < 1e-12);
    CHECK(std::abs(normals[1].dot(normals[2])) < 1e-12);
  }
}

TEST_CASE("skew_volume samples gt through the shear about the centre") {
  PhantomSpec spec;
  spec.size = 24;
  const Volume gt = make_phantom(spec);
  SkewParams p;
  p.theta_deg = 5.0;
  const Volume s = skew_volume(gt, p);
  const Eigen::Matrix4d m = skew_matrix(p);
  const Eigen::Vector3d c = gt.geometry().center();
  const Eigen::Vector3d x = gt.geometry().world({10, 13, 9});
  const Eigen::Vector3d src = c + m.topLeftCorner<3, 3>() * (x - c);
  CHECK(s.at(10, 13, 9) == doctest::Approx(*sample_trilinear(gt, src)));
  p.theta_deg = 0.0;
  const Volume same = skew_volume(gt, p);
  for (std::size_t n = 0; n < gt.size(); ++n) REQUIRE(same[n] == gt[n]);
}

TEST_CASE("skew_octant replaces exactly one octant") {
  PhantomSpec spec;
  spec.size = 20;
  const Volume gt = make_phantom(spec);
  SkewParams p;
  p.theta_deg = 8.0;
  const Volume skewed = skew_volume(gt, p);
  const Volume o = skew_octant(gt, p, 5);  // x high, y low, z high
  for (int k = 0; k < 20; ++k)
    for (int j = 0; j < 20; ++j)
      for (int i = 0; i < 20; ++i) {
        const bool inside = i >= 10 && j < 10 && k >= 10;
        REQUIRE(o.at(i, j, k) == (inside ? skewed.at(i, j, k) : gt.at(i, j, k)));
      }
}

TEST_CASE("noise is reproducible and zero-mean") {
  PhantomSpec spec;
  spec.size = 32;
  const Volume gt = make_phantom(spec);
  Stack a = corrupt_stack(gt, SkewParams{}, Orientation::axial);
  Stack b = a;
  const Stack clean = a;
  add_noise(a, 0.05, 42);
  add_noise(b, 0.05, 42);
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t n = 0; n < a.image().size(); ++n) {
    REQUIRE(a.image()[n] == b.image()[n]);
    const double d = a.image()[n] - clean.image()[n];
    sum += d;
    sum2 += d * d;
  }
  const double count = static_cast<double>(a.image().size());
  CHECK(std::abs(sum / count) < 0.005);
  CHECK(std::sqrt(sum2 / count) == doctest::Approx(0.05).epsilon(0.05));
  CHECK_THROWS_AS(add_noise(a, -1.0, 1), ParameterError);
}
