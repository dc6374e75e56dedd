#pragma once

#include <vector>

#include <Eigen/Core>

namespace pvr {

/// sin(r)/r evaluated by its alternating Taylor series
///   1 - r^2/3! + r^4/5! - r^6/7! + ...
/// Summation stops once |next term| / |partial sum| < eps.
double taylor_sinc(double r, double eps);

struct PsfConfig {
  /// Support half-width in units of the spacing along each slice axis.
  double support = 2.0;
  /// Relative truncation bound of the Taylor sinc.
  double epsilon = 1e-6;
};

/// Acquisition point-spread function in slice-local millimetres (u, v along
/// the in-plane axes, w along the slice normal).
///
/// In-plane: Taylor sinc with zeros at multiples of the pixel spacing.
/// Through-plane: Gaussian with FWHM equal to the slice thickness.
/// Negative sinc lobes are kept.
class Psf {
 public:
  Psf(double spacing_x, double spacing_y, double thickness, const PsfConfig& cfg = {});

  /// Analytic kernel value (unnormalized), 0 outside the support box.
  double kernel(double u, double v, double w) const;

  /// Same kernel read from precomputed tables (linear interpolation). This is
  /// what the forward model uses.
  double weight(double u, double v, double w) const {
    const double au = u < 0 ? -u : u;
    const double av = v < 0 ? -v : v;
    const double aw = w < 0 ? -w : w;
    if (au > radius_[0] || av > radius_[1] || aw > radius_[2]) return 0.0;
    return lookup(inplane_, au * inv_step_[0]) * lookup(inplane_, av * inv_step_[1]) *
           lookup(through_, aw * inv_step_[2]);
  }

  const Eigen::Vector3d& radius() const { return radius_; }
  double sigma_through_plane() const { return sigma_w_; }
  const PsfConfig& config() const { return cfg_; }

 private:
  static double lookup(const std::vector<double>& table, double pos) {
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= table.size()) return table.back();
    const double f = pos - static_cast<double>(i);
    return table[i] + f * (table[i + 1] - table[i]);
  }

  PsfConfig cfg_;
  Eigen::Vector3d spacing_;
  Eigen::Vector3d radius_;
  double sigma_w_;
  // Tables indexed by |offset| / spacing * kTableDensity.
  std::vector<double> inplane_;
  std::vector<double> through_;
  Eigen::Vector3d inv_step_;
};

}  // namespace pvr
