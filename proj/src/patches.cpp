#include "pvr/patches.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

#include "pvr/error.hpp"
#include "pvr/parallel.hpp"

namespace pvr {

const char* to_string(PatchShape s) {
  switch (s) {
    case PatchShape::square: return "square";
    case PatchShape::superpixel: return "superpixel";
    case PatchShape::whole_slice: return "whole_slice";
  }
  return "square";
}

PatchShape parse_patch_shape(const std::string& s) {
  std::string l(s);
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "square") return PatchShape::square;
  if (l == "superpixel") return PatchShape::superpixel;
  if (l == "whole_slice" || l == "slice") return PatchShape::whole_slice;
  throw ParameterError("unknown patch shape: " + s);
}

int Dilation::resolve(int a) const {
  const double px = percent ? value * a / 100.0 : value;
  return std::max(0, static_cast<int>(std::floor(px + 0.5)));
}

Dilation Dilation::parse(const std::string& s) {
  Dilation d;
  std::string body = s;
  if (!body.empty() && body.back() == '%') {
    d.percent = true;
    body.pop_back();
  }
  try {
    std::size_t used = 0;
    d.value = std::stod(body, &used);
    if (used != body.size()) throw std::invalid_argument(s);
  } catch (const std::exception&) {
    throw ParameterError("invalid dilation: " + s);
  }
  if (d.value < 0.0) throw ParameterError("dilation must be >= 0");
  return d;
}

std::string Dilation::str() const {
  std::ostringstream out;
  out << value;
  if (percent) out << '%';
  return out.str();
}

void PatchPlan::validate() const {
  if (size < 1) throw ParameterError("patch size must be >= 1");
  if (shape == PatchShape::square && (stride < 1 || stride > size)) {
    throw ParameterError("square stride must satisfy 1 <= stride <= patch size");
  }
  if (dilation.value < 0.0) throw ParameterError("dilation must be >= 0");
  if (shape == PatchShape::superpixel && !(compactness > 0.0)) {
    throw ParameterError("superpixel compactness must be > 0");
  }
  for (double s : scales) {
    if (!(s > 0.0 && s <= 1.0)) throw ParameterError("multiscale factors must lie in (0, 1]");
  }
}

std::vector<double> PatchPlan::default_scales(int iterations) {
  std::vector<double> s;
  double f = 1.0;
  for (int i = 0; i < iterations; ++i, f *= 0.75) s.push_back(f);
  return s;
}

std::vector<std::uint32_t> dilate_pixels(std::span<const std::uint32_t> core, int nx, int ny,
                                         int margin) {
  if (core.empty() || margin <= 0) return {core.begin(), core.end()};
  int x0 = nx, y0 = ny, x1 = 0, y1 = 0;
  for (auto p : core) {
    const int x = static_cast<int>(p % static_cast<std::uint32_t>(nx));
    const int y = static_cast<int>(p / static_cast<std::uint32_t>(nx));
    x0 = std::min(x0, x);
    x1 = std::max(x1, x + 1);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y + 1);
  }
  const int bx0 = std::max(0, x0 - margin), bx1 = std::min(nx, x1 + margin);
  const int by0 = std::max(0, y0 - margin), by1 = std::min(ny, y1 + margin);
  const int w = bx1 - bx0, h = by1 - by0;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(w) * h, 0);
  for (auto p : core) {
    const int x = static_cast<int>(p % static_cast<std::uint32_t>(nx)) - bx0;
    const int y = static_cast<int>(p / static_cast<std::uint32_t>(nx)) - by0;
    mask[static_cast<std::size_t>(y) * w + x] = 1;
  }
  // Chessboard dilation is separable: a 1D max filter along x, then along y.
  std::vector<std::uint8_t> tmp(mask.size(), 0);
  for (int y = 0; y < h; ++y) {
    int last = -margin - 1;  // last set position seen
    std::vector<int> next(static_cast<std::size_t>(w), w + margin + 1);
    int nxt = w + margin + 1;
    for (int x = w - 1; x >= 0; --x) {
      if (mask[static_cast<std::size_t>(y) * w + x]) nxt = x;
      next[static_cast<std::size_t>(x)] = nxt;
    }
    for (int x = 0; x < w; ++x) {
      if (mask[static_cast<std::size_t>(y) * w + x]) last = x;
      if (x - last <= margin || next[static_cast<std::size_t>(x)] - x <= margin) {
        tmp[static_cast<std::size_t>(y) * w + x] = 1;
      }
    }
  }
  std::fill(mask.begin(), mask.end(), 0);
  for (int x = 0; x < w; ++x) {
    int last = -margin - 1;
    std::vector<int> next(static_cast<std::size_t>(h), h + margin + 1);
    int nxt = h + margin + 1;
    for (int y = h - 1; y >= 0; --y) {
      if (tmp[static_cast<std::size_t>(y) * w + x]) nxt = y;
      next[static_cast<std::size_t>(y)] = nxt;
    }
    for (int y = 0; y < h; ++y) {
      if (tmp[static_cast<std::size_t>(y) * w + x]) last = y;
      if (y - last <= margin || next[static_cast<std::size_t>(y)] - y <= margin) {
        mask[static_cast<std::size_t>(y) * w + x] = 1;
      }
    }
  }
  std::vector<std::uint32_t> out;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (mask[static_cast<std::size_t>(y) * w + x]) {
        out.push_back(static_cast<std::uint32_t>((y + by0) * nx + x + bx0));
      }
    }
  }
  return out;
}

namespace {

void set_bounds(Patch& p) {
  p.x0 = p.slice_nx;
  p.y0 = p.slice_ny;
  p.x1 = 0;
  p.y1 = 0;
  for (std::size_t n = 0; n < p.pixels.size(); ++n) {
    p.x0 = std::min(p.x0, p.pixel_x(n));
    p.x1 = std::max(p.x1, p.pixel_x(n) + 1);
    p.y0 = std::min(p.y0, p.pixel_y(n));
    p.y1 = std::max(p.y1, p.pixel_y(n) + 1);
  }
  p.posterior.assign(p.pixels.size(), 1.0);
}

}  // namespace

std::vector<int> window_origins(int n, int a, int stride) {
  if (a > n) throw ParameterError("patch size exceeds slice dimension");
  if (stride < 1 || stride > a) throw ParameterError("stride must satisfy 1 <= stride <= a");
  std::vector<int> o;
  for (int s = 0; s + a <= n; s += stride) o.push_back(s);
  if (o.back() + a < n) o.push_back(n - a);
  return o;
}

std::vector<Patch> extract_square(const SliceView& slice, int a, int stride, int margin) {
  if (a < 1) throw ParameterError("patch size must be >= 1");
  const auto ox = window_origins(slice.nx, a, stride);
  const auto oy = window_origins(slice.ny, a, stride);
  std::vector<Patch> out;
  out.reserve(ox.size() * oy.size());
  for (int y0 : oy) {
    for (int x0 : ox) {
      Patch p;
      p.slice_nx = slice.nx;
      p.slice_ny = slice.ny;
      p.margin = margin;
      p.core.reserve(static_cast<std::size_t>(a) * a);
      for (int y = y0; y < y0 + a; ++y) {
        for (int x = x0; x < x0 + a; ++x) p.core.push_back(static_cast<std::uint32_t>(y * slice.nx + x));
      }
      const int dx0 = std::max(0, x0 - margin), dx1 = std::min(slice.nx, x0 + a + margin);
      const int dy0 = std::max(0, y0 - margin), dy1 = std::min(slice.ny, y0 + a + margin);
      p.pixels.reserve(static_cast<std::size_t>(dx1 - dx0) * (dy1 - dy0));
      for (int y = dy0; y < dy1; ++y) {
        for (int x = dx0; x < dx1; ++x) p.pixels.push_back(static_cast<std::uint32_t>(y * slice.nx + x));
      }
      set_bounds(p);
      out.push_back(std::move(p));
    }
  }
  return out;
}

Patch whole_slice_patch(const SliceView& slice) {
  Patch p;
  p.slice_nx = slice.nx;
  p.slice_ny = slice.ny;
  const auto n = static_cast<std::uint32_t>(slice.nx * slice.ny);
  p.core.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) p.core[i] = i;
  p.pixels = p.core;
  set_bounds(p);
  return p;
}

std::vector<Patch> extract_superpixels(const SliceView& slice, int a, double t, int margin,
                                       const SlicOptions& opts) {
  const SlicResult seg = slic(slice, a, t, opts);
  std::vector<std::vector<std::uint32_t>> members(static_cast<std::size_t>(seg.label_count));
  for (std::size_t i = 0; i < seg.labels.size(); ++i) {
    members[static_cast<std::size_t>(seg.labels[i])].push_back(static_cast<std::uint32_t>(i));
  }
  std::vector<Patch> out;
  out.reserve(members.size());
  for (auto& m : members) {
    if (m.empty()) continue;
    Patch p;
    p.slice_nx = slice.nx;
    p.slice_ny = slice.ny;
    p.margin = margin;
    p.core = std::move(m);
    p.pixels = dilate_pixels(p.core, slice.nx, slice.ny, margin);
    set_bounds(p);
    out.push_back(std::move(p));
  }
  return out;
}

int effective_patch_size(const PatchPlan& plan, int iteration) {
  if (!plan.multiscale) return plan.size;
  if (iteration < 0 || iteration >= static_cast<int>(plan.scales.size())) {
    throw ParameterError("iteration outside the multiscale schedule");
  }
  const double s = plan.scales[static_cast<std::size_t>(iteration)];
  return std::max(8, static_cast<int>(std::lround(s * plan.size)));
}

std::vector<Patch> plan_iteration(const PatchPlan& plan, int iteration,
                                  const std::vector<Stack>& stacks, int workers) {
  plan.validate();
  const int a = effective_patch_size(plan, iteration);
  const int stride =
      std::clamp(static_cast<int>(std::lround(static_cast<double>(plan.stride) * a / plan.size)), 1, a);
  const int margin = plan.dilation.resolve(a);

  struct Job {
    int stack;
    int slice;
  };
  std::vector<Job> jobs;
  for (int s = 0; s < static_cast<int>(stacks.size()); ++s) {
    for (int k = 0; k < stacks[static_cast<std::size_t>(s)].slice_count(); ++k) jobs.push_back({s, k});
  }
  std::vector<std::vector<Patch>> per_slice(jobs.size());
  parallel_for(jobs.size(), workers, [&](std::size_t j, int) {
    const Stack& st = stacks[static_cast<std::size_t>(jobs[j].stack)];
    const SliceView view = st.slice(jobs[j].slice);
    std::vector<Patch> ps;
    switch (plan.shape) {
      case PatchShape::square: {
        const int fit = std::min({a, view.nx, view.ny});
        ps = extract_square(view, fit, std::min(stride, fit), margin);
        break;
      }
      case PatchShape::superpixel: ps = extract_superpixels(view, a, plan.compactness, margin); break;
      case PatchShape::whole_slice: ps.push_back(whole_slice_patch(view)); break;
    }
    for (auto& p : ps) {
      p.stack = jobs[j].stack;
      p.slice = jobs[j].slice;
      p.scale_index = iteration;
      p.pose = st.slice_pose(jobs[j].slice);
    }
    per_slice[j] = std::move(ps);
  });

  std::vector<Patch> out;
  int id = 0;
  for (auto& ps : per_slice) {
    for (auto& p : ps) {
      p.id = id++;
      out.push_back(std::move(p));
    }
  }
  return out;
}

OverheadReport overhead_report(std::span<const Patch> patches) {
  OverheadReport r;
  r.patch_count = patches.size();
  std::set<std::pair<int, int>> seen;
  for (const auto& p : patches) {
    r.dilated_pixels += p.pixels.size();
    if (seen.insert({p.stack, p.slice}).second) {
      r.slice_pixels += static_cast<std::size_t>(p.slice_nx) * p.slice_ny;
    }
  }
  if (r.slice_pixels > 0) {
    r.overhead_pct = 100.0 * (static_cast<double>(r.dilated_pixels) - static_cast<double>(r.slice_pixels)) /
                     static_cast<double>(r.slice_pixels);
  }
  return r;
}

}  // namespace pvr
