#include "pvr/psf.hpp"

#include <cmath>
#include <numbers>

#include "pvr/error.hpp"

namespace pvr {

namespace {

constexpr int kTableDensity = 8192;  // samples per spacing unit
constexpr int kMaxTerms = 200;

// FWHM = 2 sqrt(2 ln 2) sigma
constexpr double kFwhmToSigma = 0.42466090014400953;

}  // namespace

double taylor_sinc(double r, double eps) {
  if (!(eps > 0.0)) throw ParameterError("taylor_sinc requires eps > 0");
  const double r2 = r * r;
  double term = 1.0;
  double sum = 1.0;
  for (int n = 1; n < kMaxTerms; ++n) {
    // term_n = (-1)^n r^(2n) / (2n+1)!
    term *= -r2 / ((2.0 * n) * (2.0 * n + 1.0));
    if (term == 0.0 || std::abs(term) < eps * std::abs(sum)) break;
    sum += term;
  }
  return sum;
}

Psf::Psf(double spacing_x, double spacing_y, double thickness, const PsfConfig& cfg)
    : cfg_(cfg), spacing_(spacing_x, spacing_y, thickness) {
  if (!(spacing_x > 0.0 && spacing_y > 0.0 && thickness > 0.0)) {
    throw ParameterError("PSF spacing and thickness must be > 0");
  }
  if (!(cfg.support > 0.0)) throw ParameterError("PSF support must be > 0");
  if (!(cfg.epsilon > 0.0)) throw ParameterError("PSF epsilon must be > 0");
  radius_ = spacing_ * cfg.support;
  sigma_w_ = thickness * kFwhmToSigma;

  const auto n = static_cast<std::size_t>(std::ceil(cfg.support * kTableDensity)) + 2;
  inplane_.resize(n);
  through_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = static_cast<double>(i) / kTableDensity;  // offset in spacing units
    inplane_[i] = taylor_sinc(std::numbers::pi * s, cfg.epsilon);
    const double w = s * thickness / sigma_w_;
    through_[i] = std::exp(-0.5 * w * w);
  }
  inv_step_ = spacing_.cwiseInverse() * kTableDensity;
}

double Psf::kernel(double u, double v, double w) const {
  if (std::abs(u) > radius_[0] || std::abs(v) > radius_[1] || std::abs(w) > radius_[2]) return 0.0;
  const double gw = w / sigma_w_;
  return taylor_sinc(std::numbers::pi * u / spacing_[0], cfg_.epsilon) *
         taylor_sinc(std::numbers::pi * v / spacing_[1], cfg_.epsilon) * std::exp(-0.5 * gw * gw);
}

}  // namespace pvr
