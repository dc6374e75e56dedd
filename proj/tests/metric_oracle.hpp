#pragma once

// Step-by-step transcriptions of the metric formulas, evaluated in long
// double with separate passes for every statistic.

#include <cmath>
#include <vector>

namespace pvr::testing {

struct Moments {
  long double mean_a = 0, mean_b = 0, var_a = 0, var_b = 0, cov = 0;
};

inline Moments moments(const std::vector<double>& a, const std::vector<double>& b) {
  Moments m;
  const long double n = static_cast<long double>(a.size());
  for (double v : a) m.mean_a += v;
  m.mean_a /= n;
  for (double v : b) m.mean_b += v;
  m.mean_b /= n;
  for (double v : a) m.var_a += (v - m.mean_a) * (v - m.mean_a);
  m.var_a /= n;
  for (double v : b) m.var_b += (v - m.mean_b) * (v - m.mean_b);
  m.var_b /= n;
  for (std::size_t i = 0; i < a.size(); ++i) m.cov += (a[i] - m.mean_a) * (b[i] - m.mean_b);
  m.cov /= n;
  return m;
}

inline double oracle_cc(const std::vector<double>& a, const std::vector<double>& b) {
  const Moments m = moments(a, b);
  const long double sa = std::sqrt(m.var_a), sb = std::sqrt(m.var_b);
  long double sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - m.mean_a) * (b[i] - m.mean_b) / (sa * sb);
  return static_cast<double>(sum / static_cast<long double>(a.size()));
}

inline double oracle_psnr(const std::vector<double>& a, const std::vector<double>& b) {
  long double imax = a[0], se = 0;
  for (double v : a) imax = std::max<long double>(imax, v);
  for (std::size_t i = 0; i < a.size(); ++i) se += (static_cast<long double>(a[i]) - b[i]) * (static_cast<long double>(a[i]) - b[i]);
  const long double mse = se / static_cast<long double>(a.size());
  return static_cast<double>(10.0L * std::log10(imax * imax / mse));
}

inline double oracle_ssim(const std::vector<double>& a, const std::vector<double>& b, double L,
                          double k1 = 0.01, double k2 = 0.03) {
  const Moments m = moments(a, b);
  const long double c1 = (static_cast<long double>(k1) * L) * (static_cast<long double>(k1) * L);
  const long double c2 = (static_cast<long double>(k2) * L) * (static_cast<long double>(k2) * L);
  const long double luminance = (2 * m.mean_a * m.mean_b + c1) / (m.mean_a * m.mean_a + m.mean_b * m.mean_b + c1);
  const long double structure = (2 * m.cov + c2) / (m.var_a + m.var_b + c2);
  return static_cast<double>(luminance * structure);
}

inline double oracle_range(const std::vector<double>& a) {
  double lo = a[0], hi = a[0];
  for (double v : a) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return hi - lo;
}

}  // namespace pvr::testing
