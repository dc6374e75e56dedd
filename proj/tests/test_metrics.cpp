#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "metric_oracle.hpp"
#include "pvr/error.hpp"
#include "pvr/metrics.hpp"
#include "pvr/phantom.hpp"
#include "pvr/superres.hpp"

using namespace pvr;
using namespace pvr::testing;

namespace {

std::vector<double> random_image(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

Image2D ramp(int nx, int ny) {
  Image2D img(nx, ny);
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) img.at(x, y) = 0.2 + 0.01 * x + 0.02 * y + 0.1 * std::sin(0.7 * x * y);
  }
  return img;
}

}  // namespace

TEST_CASE("psnr hand values") {
  const std::vector<double> a{100, 100, 100, 100};
  const std::vector<double> b{90, 110, 100, 100};
  CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(10000.0 / 50.0)).epsilon(1e-12));
  CHECK(psnr(a, b) == doctest::Approx(23.0103).epsilon(1e-5));
  CHECK(psnr(a, a) == std::numeric_limits<double>::infinity());
  const std::vector<double> a2{200, 200, 200, 200}, b2{180, 220, 200, 200};
  CHECK(std::abs(psnr(a2, b2) - psnr(a, b)) <= 1e-12);
  CHECK_THROWS_AS(psnr(a, std::vector<double>{1, 2}), ParameterError);
  CHECK_THROWS_AS(psnr(std::vector<double>{0, 0}, std::vector<double>{1, 2}), ParameterError);
}

TEST_CASE("psnr falls as noise grows") {
  std::mt19937_64 rng(5);
  const auto a = random_image(4096, rng);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> unit(a.size());
  for (double& v : unit) v = n(rng);
  double prev = std::numeric_limits<double>::infinity();
  for (double sigma : {0.01, 0.05, 0.2}) {
    std::vector<double> b(a);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += sigma * unit[i];
    const double p = psnr(a, b);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("metrics match step-by-step evaluation") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 50; ++t) {
    const auto a = random_image(64 + t, rng);
    auto b = random_image(64 + t, rng);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = 0.6 * a[i] + 0.4 * b[i];
    const double L = oracle_range(a);
    CHECK(std::abs(*cc_metric(a, b) - oracle_cc(a, b)) <= 1e-9);
    CHECK(std::abs(psnr(a, b) - oracle_psnr(a, b)) <= 1e-6);
    CHECK(std::abs(ssim(a, b) - oracle_ssim(a, b, L)) <= 1e-9);
    CHECK(std::abs(dssim(ssim(a, b)) - (1.0 - oracle_ssim(a, b, L)) / 2.0) <= 1e-9);
  }
}

TEST_CASE("ssim identities") {
  std::mt19937_64 rng(13);
  const auto a = random_image(100, rng);
  const auto b = random_image(100, rng);
  CHECK(ssim(a, a) == 1.0);
  CHECK(dssim(ssim(a, a)) == 0.0);
  CHECK(std::abs(ssim(a, b, 1.0) - ssim(b, a, 1.0)) <= 1e-12);
  const double s = ssim(a, b);
  CHECK(dssim(s) == (1.0 - s) / 2.0);
  CHECK_THROWS_AS(ssim(a, b, 0.0), ParameterError);
  CHECK_THROWS_AS(ssim(a, std::vector<double>(3, 0.0), 1.0), ParameterError);
}

TEST_CASE("ssim against a constant with the same mean") {
  const std::vector<double> a{0.1, 0.5, 0.9, 0.3, 0.7};
  const std::vector<double> b(5, 0.5);
  const double L = 0.8;
  // mu equal: luminance term 1; covariance 0: structure c2 / (var_a + c2).
  const double var_a = (0.16 + 0.0 + 0.16 + 0.04 + 0.04) / 5.0;
  const double c2 = (0.03 * L) * (0.03 * L);
  CHECK(ssim(a, b, L) == doctest::Approx(c2 / (var_a + c2)).epsilon(1e-12));
  CHECK(std::abs(ssim(a, b, L) - oracle_ssim(a, b, L)) <= 1e-12);
}

TEST_CASE("anti-correlated pair has dssim above one half") {
  std::vector<double> a, b;
  for (int i = 0; i < 64; ++i) {
    a.push_back(0.5 + 0.4 * std::sin(0.3 * i));
    b.push_back(0.5 - 0.4 * std::sin(0.3 * i));
  }
  const double d = dssim(ssim(a, b));
  CHECK(d > 0.5);
  CHECK(d <= 1.0);
}

TEST_CASE("cc metric shares the registration correlation") {
  const std::vector<double> a{1, 2, 3, 4}, b{4, 3, 2, 1};
  CHECK(*cc_metric(a, b) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(*cc_metric(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_FALSE(cc_metric(a, std::vector<double>(4, 2.0)).has_value());
}

TEST_CASE("windowed ssim and dssim map") {
  const Image2D a = ramp(21, 13);
  const auto o = metric_window_origins(21, 8, 4);
  CHECK(o == std::vector<int>{0, 4, 8, 12, 13});
  CHECK(metric_window_origins(5, 8, 4) == std::vector<int>{0});
  CHECK_THROWS_AS(metric_window_origins(0, 8, 4), ParameterError);

  const DssimMap same = dssim_map(a, a);
  for (double v : same.map.data) CHECK(v == 0.0);
  CHECK(same.mean == 0.0);

  Image2D b = a;
  for (int x = 0; x < 8; ++x) b.at(x, 3) += 0.3;
  const DssimMap dm = dssim_map(a, b);
  double s = 0.0;
  for (double w : dm.windows) s += w;
  CHECK(std::abs(dm.mean - s / static_cast<double>(dm.windows.size())) <= 1e-12);
  // Centres sit at origin + 3.5; pixel (5, 5) is 3/8 of the way to the next ones.
  const std::size_t ncx = o.size();
  const double f = 0.375;
  const double expect = (1 - f) * ((1 - f) * dm.windows[0] + f * dm.windows[1]) +
                        f * ((1 - f) * dm.windows[ncx] + f * dm.windows[ncx + 1]);
  CHECK(dm.map.at(5, 5) == doctest::Approx(expect).epsilon(1e-12));
  // Pixels before the first centre take its value.
  CHECK(dm.map.at(0, 0) == doctest::Approx(dm.windows[0]).epsilon(1e-12));

  // Window SSIM on the first window equals the global formula on its pixels.
  std::vector<double> wa, wb;
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      wa.push_back(a.at(x, y));
      wb.push_back(b.at(x, y));
    }
  }
  const double L = oracle_range(a.data);
  CHECK(std::abs(dm.windows[0] - (1.0 - oracle_ssim(wa, wb, L)) / 2.0) <= 1e-12);
  CHECK(ssim_windowed(a, a, L) == 1.0);
}

TEST_CASE("reconstruction of a motionless stack evaluates near perfect") {
  PhantomSpec spec;
  spec.size = 32;
  const Volume gt = make_phantom(spec);
  const std::vector<Stack> stacks{corrupt_stack(gt, SkewParams{}, Orientation::axial)};
  SrOptions opts;
  std::vector<Patch> patches;
  for (int k = 0; k < stacks[0].slice_count(); ++k) {
    Patch p = whole_slice_patch(stacks[0].slice(k));
    p.slice = k;
    patches.push_back(std::move(p));
  }
  const Geometry g = reconstruction_grid(stacks, 0, 1.25);
  const ForwardModel model(g, stacks);
  ReconState st = initialize_recon(model, patches, opts);
  st.lambda = 0.0;
  for (int i = 0; i < 60; ++i) sr_iteration(st, model, patches, opts);
  const MetricReport r = evaluate_reconstruction(model, st.recon, patches);
  REQUIRE_FALSE(r.slices.empty());
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& m : r.slices) worst = std::min(worst, m.psnr);
  CHECK(worst >= 40.0);
  CHECK(r.cc > 0.99);

  // A mask that selects nothing is an error.
  Volume empty(gt.geometry(), 0.0);
  EvaluateOptions eo;
  eo.mask = &empty;
  CHECK_THROWS_AS(evaluate_reconstruction(model, st.recon, patches, eo), EmptyInputError);
}
