#include "pvr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "pvr/error.hpp"
#include "pvr/parallel.hpp"
#include "pvr/similarity.hpp"

namespace pvr {

namespace {

void check_sizes(std::size_t a, std::size_t b) {
  if (a != b) throw ParameterError("metric inputs differ in size");
  if (a == 0) throw EmptyInputError("metric inputs are empty");
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double psnr(std::span<const double> original, std::span<const double> reconstructed) {
  check_sizes(original.size(), reconstructed.size());
  double imax = original[0];
  bool any = false;
  double se = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    imax = std::max(imax, original[i]);
    any = any || original[i] != 0.0;
    const double d = original[i] - reconstructed[i];
    se += d * d;
  }
  if (!any) throw ParameterError("psnr: original image is all zero");
  const double mse = se / static_cast<double>(original.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(imax * imax / mse);
}

double ssim(std::span<const double> original, std::span<const double> reconstructed, double L,
            double k1, double k2) {
  check_sizes(original.size(), reconstructed.size());
  if (!(L > 0.0)) throw ParameterError("ssim: dynamic range L must be > 0");
  const double n = static_cast<double>(original.size());
  const double mi = mean_of(original);
  const double mj = mean_of(reconstructed);
  double vi = 0.0, vj = 0.0, cov = 0.0;
  for (std::size_t k = 0; k < original.size(); ++k) {
    const double di = original[k] - mi;
    const double dj = reconstructed[k] - mj;
    vi += di * di;
    vj += dj * dj;
    cov += di * dj;
  }
  vi /= n;
  vj /= n;
  cov /= n;
  const double c1 = (k1 * L) * (k1 * L);
  const double c2 = (k2 * L) * (k2 * L);
  return ((2.0 * mi * mj + c1) * (2.0 * cov + c2)) / ((mi * mi + mj * mj + c1) * (vi + vj + c2));
}

double ssim(std::span<const double> original, std::span<const double> reconstructed) {
  check_sizes(original.size(), reconstructed.size());
  const auto [lo, hi] = std::minmax_element(original.begin(), original.end());
  return ssim(original, reconstructed, *hi - *lo);
}

std::optional<double> cc_metric(std::span<const double> original, std::span<const double> reconstructed) {
  return cc_similarity(original, reconstructed);
}

std::vector<int> metric_window_origins(int n, int window, int stride) {
  if (n < 1 || window < 1 || stride < 1) throw ParameterError("metric windows need positive sizes");
  const int w = std::min(window, n);
  std::vector<int> o;
  for (int s = 0; s + w <= n; s += stride) o.push_back(s);
  if (o.back() + w < n) o.push_back(n - w);
  return o;
}

namespace {

std::vector<double> window_ssim(const Image2D& a, const Image2D& b, double L, int window, int stride,
                                double k1, double k2, std::vector<int>& ox, std::vector<int>& oy,
                                int& wx, int& wy) {
  if (a.nx != b.nx || a.ny != b.ny) throw ParameterError("metric images differ in size");
  ox = metric_window_origins(a.nx, window, stride);
  oy = metric_window_origins(a.ny, window, stride);
  wx = std::min(window, a.nx);
  wy = std::min(window, a.ny);
  std::vector<double> out;
  out.reserve(ox.size() * oy.size());
  std::vector<double> va, vb;
  for (int y0 : oy) {
    for (int x0 : ox) {
      va.clear();
      vb.clear();
      for (int y = y0; y < y0 + wy; ++y) {
        for (int x = x0; x < x0 + wx; ++x) {
          va.push_back(a.at(x, y));
          vb.push_back(b.at(x, y));
        }
      }
      out.push_back(ssim(va, vb, L, k1, k2));
    }
  }
  return out;
}

double image_range(const Image2D& img) {
  const auto [lo, hi] = std::minmax_element(img.data.begin(), img.data.end());
  return *hi - *lo;
}

// Position of v between sorted centres: lower index and fraction, clamped.
void bracket(const std::vector<double>& c, double v, std::size_t& i, double& f) {
  if (c.size() == 1 || v <= c.front()) {
    i = 0;
    f = 0.0;
    return;
  }
  if (v >= c.back()) {
    i = c.size() - 2;
    f = 1.0;
    return;
  }
  i = static_cast<std::size_t>(std::upper_bound(c.begin(), c.end(), v) - c.begin()) - 1;
  f = (v - c[i]) / (c[i + 1] - c[i]);
}

}  // namespace

double ssim_windowed(const Image2D& original, const Image2D& reconstructed, double L, int window,
                     int stride, double k1, double k2) {
  std::vector<int> ox, oy;
  int wx = 0, wy = 0;
  const auto s = window_ssim(original, reconstructed, L, window, stride, k1, k2, ox, oy, wx, wy);
  return mean_of(s);
}

DssimMap dssim_map(const Image2D& original, const Image2D& reconstructed, int window, int stride,
                   std::optional<double> L) {
  const double range = L ? *L : image_range(original);
  std::vector<int> ox, oy;
  int wx = 0, wy = 0;
  const auto s = window_ssim(original, reconstructed, range, window, stride, 0.01, 0.03, ox, oy, wx, wy);
  DssimMap out;
  out.windows.reserve(s.size());
  for (double v : s) out.windows.push_back(dssim(v));
  out.mean = mean_of(out.windows);

  std::vector<double> cx, cy;
  for (int o : ox) cx.push_back(o + (wx - 1) * 0.5);
  for (int o : oy) cy.push_back(o + (wy - 1) * 0.5);
  const std::size_t ncx = cx.size();
  out.map = Image2D(original.nx, original.ny);
  for (int y = 0; y < original.ny; ++y) {
    std::size_t iy;
    double fy;
    bracket(cy, y, iy, fy);
    const std::size_t iy1 = cy.size() == 1 ? iy : iy + 1;
    for (int x = 0; x < original.nx; ++x) {
      std::size_t ix;
      double fx;
      bracket(cx, x, ix, fx);
      const std::size_t ix1 = ncx == 1 ? ix : ix + 1;
      const double v00 = out.windows[iy * ncx + ix], v01 = out.windows[iy * ncx + ix1];
      const double v10 = out.windows[iy1 * ncx + ix], v11 = out.windows[iy1 * ncx + ix1];
      out.map.at(x, y) = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
    }
  }
  return out;
}

std::vector<SimulatedSlice> simulate_slices(const ForwardModel& model, const Volume& recon,
                                            std::span<const Patch> patches, int workers) {
  std::map<std::pair<int, int>, std::vector<std::size_t>> by_slice;
  for (std::size_t i = 0; i < patches.size(); ++i) by_slice[{patches[i].stack, patches[i].slice}].push_back(i);
  std::vector<std::pair<std::pair<int, int>, std::vector<std::size_t>>> groups(by_slice.begin(), by_slice.end());
  std::vector<SimulatedSlice> out(groups.size());

  parallel_for(groups.size(), effective_workers(workers), [&](std::size_t g, int) {
    const auto [key, members] = groups[g];
    const Stack& st = model.stacks()[static_cast<std::size_t>(key.first)];
    SimulatedSlice s;
    s.stack = key.first;
    s.slice = key.second;
    s.image = Image2D(st.nx(), st.ny());
    std::vector<int> count(s.image.data.size(), 0);
    for (std::size_t pi : members) {
      const Patch& p = patches[pi];
      const SimulatedPatch sim = simulate_patch(model, recon, p);
      // core and pixels are both sorted, so walk them together.
      std::size_t c = 0;
      for (std::size_t n = 0; n < p.pixels.size() && c < p.core.size(); ++n) {
        if (p.pixels[n] != p.core[c]) continue;
        ++c;
        if (!sim.observed[n]) continue;
        s.image.data[p.pixels[n]] += sim.values[n];
        ++count[p.pixels[n]];
      }
    }
    s.observed.assign(count.size(), 0);
    for (std::size_t i = 0; i < count.size(); ++i) {
      if (count[i] > 0) {
        s.image.data[i] /= count[i];
        s.observed[i] = 1;
      }
    }
    out[g] = std::move(s);
  });
  return out;
}

MetricReport evaluate_reconstruction(const ForwardModel& model, const Volume& recon,
                                     std::span<const Patch> patches, const EvaluateOptions& opts) {
  const std::vector<SimulatedSlice> sims = simulate_slices(model, recon, patches, opts.workers);
  MetricReport report;
  report.region = opts.region;
  if (opts.heat_maps) {
    for (const auto& st : model.stacks()) report.dssim_maps.emplace_back(st.geometry());
  }

  std::vector<std::optional<SliceMetrics>> rows(sims.size());
  std::vector<std::size_t> selected_count(sims.size(), 0);
  parallel_for(sims.size(), effective_workers(opts.workers), [&](std::size_t i, int) {
    const SimulatedSlice& s = sims[i];
    const Stack& st = model.stacks()[static_cast<std::size_t>(s.stack)];
    const SliceView orig = st.slice(s.slice);
    std::vector<std::uint8_t> sel(s.observed);
    if (opts.mask != nullptr) {
      const Geometry& mg = opts.mask->geometry();
      for (int y = 0; y < orig.ny; ++y) {
        for (int x = 0; x < orig.nx; ++x) {
          const std::size_t n = static_cast<std::size_t>(y) * orig.nx + x;
          if (!sel[n]) continue;
          const Eigen::Vector3d idx = mg.index(st.slice_pose(s.slice).apply(st.pixel_world(x, y, s.slice)));
          const int ii = static_cast<int>(std::lround(idx.x()));
          const int jj = static_cast<int>(std::lround(idx.y()));
          const int kk = static_cast<int>(std::lround(idx.z()));
          const bool inside = ii >= 0 && jj >= 0 && kk >= 0 && ii < mg.dims[0] && jj < mg.dims[1] &&
                              kk < mg.dims[2] && opts.mask->at(ii, jj, kk) > 0.0;
          if (!inside) sel[n] = 0;
        }
      }
    }
    std::vector<double> a, b;
    for (std::size_t n = 0; n < sel.size(); ++n) {
      if (!sel[n]) continue;
      a.push_back(orig.data[n]);
      b.push_back(s.image.data[n]);
    }
    selected_count[i] = a.size();
    if (a.size() < 2) return;
    const auto [lo, hi] = std::minmax_element(a.begin(), a.end());
    if (*hi == *lo) return;
    const auto cc = cc_similarity(a, b);

    Image2D original(orig.nx, orig.ny);
    std::copy(orig.data.begin(), orig.data.end(), original.data.begin());
    Image2D simulated = s.image;
    // Unobserved pixels carry no simulation; use the original so they add no dissimilarity.
    for (std::size_t n = 0; n < s.observed.size(); ++n) {
      if (!s.observed[n]) simulated.data[n] = original.data[n];
    }
    const DssimMap dm = dssim_map(original, simulated, 8, 4, *hi - *lo);

    SliceMetrics m;
    m.stack = s.stack;
    m.slice = s.slice;
    m.region = opts.region;
    m.cc = cc ? *cc : 0.0;
    m.psnr = psnr(a, b);
    m.ssim = ssim(a, b, *hi - *lo);
    m.dssim = dm.mean;
    rows[i] = m;
    if (opts.heat_maps) {
      Volume& v = report.dssim_maps[static_cast<std::size_t>(s.stack)];
      std::copy(dm.map.data.begin(), dm.map.data.end(),
                v.data().begin() + static_cast<std::ptrdiff_t>(dm.map.data.size()) * s.slice);
    }
  });

  std::size_t total = 0;
  for (auto c : selected_count) total += c;
  if (total == 0) throw EmptyInputError("evaluation selected no pixels");
  for (auto& r : rows) {
    if (r) report.slices.push_back(*r);
  }
  if (report.slices.empty()) throw EmptyInputError("evaluation found no non-constant slice");
  for (const auto& m : report.slices) {
    report.cc += m.cc;
    report.psnr += m.psnr;
    report.ssim += m.ssim;
    report.dssim += m.dssim;
  }
  const double n = static_cast<double>(report.slices.size());
  report.cc /= n;
  report.psnr /= n;
  report.ssim /= n;
  report.dssim /= n;
  return report;
}

}  // namespace pvr
