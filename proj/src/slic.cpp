#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pvr/error.hpp"
#include "pvr/patches.hpp"

namespace pvr {

namespace {

std::vector<double> axis_seeds(int n, int a) {
  std::vector<double> s;
  int k = 0;
  for (; (k + 1) * a <= n; ++k) s.push_back(k * a + (a - 1) * 0.5);
  if (k * a < n) s.push_back((k * a + n - 1) * 0.5);
  return s;
}

// 4-connected components of the label image; returns component id per pixel.
int connected_components(const std::vector<int>& labels, int nx, int ny, std::vector<int>& comp) {
  comp.assign(labels.size(), -1);
  int count = 0;
  std::vector<int> queue;
  for (int start = 0; start < nx * ny; ++start) {
    if (comp[static_cast<std::size_t>(start)] >= 0) continue;
    const int l = labels[static_cast<std::size_t>(start)];
    comp[static_cast<std::size_t>(start)] = count;
    queue.assign(1, start);
    while (!queue.empty()) {
      const int p = queue.back();
      queue.pop_back();
      const int x = p % nx, y = p / nx;
      const int nb[4] = {x > 0 ? p - 1 : -1, x + 1 < nx ? p + 1 : -1, y > 0 ? p - nx : -1,
                         y + 1 < ny ? p + nx : -1};
      for (int q : nb) {
        if (q < 0 || comp[static_cast<std::size_t>(q)] >= 0 ||
            labels[static_cast<std::size_t>(q)] != l) {
          continue;
        }
        comp[static_cast<std::size_t>(q)] = count;
        queue.push_back(q);
      }
    }
    ++count;
  }
  return count;
}

// Splits every label into its connected components, then merges components
// smaller than min_size into the largest adjacent component.
std::vector<int> enforce_connectivity(const std::vector<int>& labels, int nx, int ny, int min_size) {
  std::vector<int> comp;
  const int count = connected_components(labels, nx, ny, comp);
  std::vector<int> parent(static_cast<std::size_t>(count));
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<long> size(static_cast<std::size_t>(count), 0);
  for (int c : comp) ++size[static_cast<std::size_t>(c)];
  auto find = [&](int c) {
    while (parent[static_cast<std::size_t>(c)] != c) {
      parent[static_cast<std::size_t>(c)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(c)])];
      c = parent[static_cast<std::size_t>(c)];
    }
    return c;
  };

  bool changed = true;
  while (changed) {
    changed = false;
    // Adjacency between current roots.
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(count));
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        const int p = y * nx + x;
        const int a = find(comp[static_cast<std::size_t>(p)]);
        if (x + 1 < nx) {
          const int b = find(comp[static_cast<std::size_t>(p + 1)]);
          if (a != b) {
            adj[static_cast<std::size_t>(a)].push_back(b);
            adj[static_cast<std::size_t>(b)].push_back(a);
          }
        }
        if (y + 1 < ny) {
          const int b = find(comp[static_cast<std::size_t>(p + nx)]);
          if (a != b) {
            adj[static_cast<std::size_t>(a)].push_back(b);
            adj[static_cast<std::size_t>(b)].push_back(a);
          }
        }
      }
    }
    for (int c = 0; c < count; ++c) {
      if (find(c) != c || size[static_cast<std::size_t>(c)] >= min_size) continue;
      int best = -1;
      for (int n : adj[static_cast<std::size_t>(c)]) {
        const int r = find(n);
        if (r == c) continue;
        if (best < 0 || size[static_cast<std::size_t>(r)] > size[static_cast<std::size_t>(best)] ||
            (size[static_cast<std::size_t>(r)] == size[static_cast<std::size_t>(best)] && r < best)) {
          best = r;
        }
      }
      if (best < 0) continue;
      parent[static_cast<std::size_t>(c)] = best;
      size[static_cast<std::size_t>(best)] += size[static_cast<std::size_t>(c)];
      changed = true;
    }
  }

  // Relabel in raster order of first appearance.
  std::vector<int> relabel(static_cast<std::size_t>(count), -1);
  std::vector<int> out(labels.size());
  int next = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int r = find(comp[i]);
    if (relabel[static_cast<std::size_t>(r)] < 0) relabel[static_cast<std::size_t>(r)] = next++;
    out[i] = relabel[static_cast<std::size_t>(r)];
  }
  return out;
}

}  // namespace

std::vector<std::array<double, 2>> slic_seeds(int nx, int ny, int a) {
  if (a < 1) throw ParameterError("superpixel size must be >= 1");
  const auto sx = axis_seeds(nx, a);
  const auto sy = axis_seeds(ny, a);
  std::vector<std::array<double, 2>> seeds;
  seeds.reserve(sx.size() * sy.size());
  for (double y : sy) {
    for (double x : sx) seeds.push_back({x, y});
  }
  return seeds;
}

SlicResult slic(const SliceView& slice, int a, double t, const SlicOptions& opts) {
  if (a < 1) throw ParameterError("superpixel size must be >= 1");
  if (!(t > 0.0)) throw ParameterError("compactness must be > 0");
  const int nx = slice.nx, ny = slice.ny;
  const auto npix = static_cast<std::size_t>(nx) * ny;

  std::vector<std::array<double, 3>> centers;
  for (const auto& s : slic_seeds(nx, ny, a)) {
    const int x = std::clamp(static_cast<int>(std::lround(s[0])), 0, nx - 1);
    const int y = std::clamp(static_cast<int>(std::lround(s[1])), 0, ny - 1);
    centers.push_back({s[0], s[1], slice.at(x, y)});
  }
  const double spatial = t / a;  // D^2 = dc^2 + (ds * t / a)^2
  const double s2 = spatial * spatial;

  SlicResult r;
  r.labels.assign(npix, -1);
  std::vector<double> dist(npix);
  for (int it = 0; it < std::max(1, opts.max_iterations); ++it) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    std::fill(r.labels.begin(), r.labels.end(), -1);
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const auto& cc = centers[c];
      const int xlo = std::max(0, static_cast<int>(std::ceil(cc[0] - a)));
      const int xhi = std::min(nx - 1, static_cast<int>(std::floor(cc[0] + a)));
      const int ylo = std::max(0, static_cast<int>(std::ceil(cc[1] - a)));
      const int yhi = std::min(ny - 1, static_cast<int>(std::floor(cc[1] + a)));
      for (int y = ylo; y <= yhi; ++y) {
        for (int x = xlo; x <= xhi; ++x) {
          const std::size_t p = static_cast<std::size_t>(y) * nx + x;
          const double dc = slice.data[p] - cc[2];
          const double dx = x - cc[0], dy = y - cc[1];
          const double d2 = dc * dc + (dx * dx + dy * dy) * s2;
          if (d2 < dist[p]) {
            dist[p] = d2;
            r.labels[p] = static_cast<int>(c);
          }
        }
      }
    }
    // Pixels outside every search window go to the globally nearest centre.
    for (std::size_t p = 0; p < npix; ++p) {
      if (r.labels[p] >= 0) continue;
      const int x = static_cast<int>(p % static_cast<std::size_t>(nx));
      const int y = static_cast<int>(p / static_cast<std::size_t>(nx));
      for (std::size_t c = 0; c < centers.size(); ++c) {
        const double dc = slice.data[p] - centers[c][2];
        const double dx = x - centers[c][0], dy = y - centers[c][1];
        const double d2 = dc * dc + (dx * dx + dy * dy) * s2;
        if (d2 < dist[p]) {
          dist[p] = d2;
          r.labels[p] = static_cast<int>(c);
        }
      }
    }
    double cost = 0.0;
    for (double d2 : dist) cost += std::sqrt(d2);
    r.cost.push_back(cost);
    r.iterations = it + 1;

    std::vector<std::array<double, 4>> acc(centers.size(), {0, 0, 0, 0});
    for (std::size_t p = 0; p < npix; ++p) {
      auto& s = acc[static_cast<std::size_t>(r.labels[p])];
      s[0] += static_cast<double>(p % static_cast<std::size_t>(nx));
      s[1] += static_cast<double>(p / static_cast<std::size_t>(nx));
      s[2] += slice.data[p];
      s[3] += 1.0;
    }
    double motion = 0.0;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      if (acc[c][3] == 0.0) continue;
      const std::array<double, 3> nc{acc[c][0] / acc[c][3], acc[c][1] / acc[c][3], acc[c][2] / acc[c][3]};
      motion = std::max(motion, std::hypot(nc[0] - centers[c][0], nc[1] - centers[c][1]));
      centers[c] = nc;
    }
    if (motion < opts.min_motion) break;
  }

  if (opts.enforce_connectivity) {
    r.labels = enforce_connectivity(r.labels, nx, ny, std::max(1, a * a / 4));
  } else {
    // Drop empty clusters and relabel in raster order.
    std::vector<int> relabel(centers.size(), -1);
    int next = 0;
    for (auto& l : r.labels) {
      if (relabel[static_cast<std::size_t>(l)] < 0) relabel[static_cast<std::size_t>(l)] = next++;
      l = relabel[static_cast<std::size_t>(l)];
    }
  }
  r.label_count = r.labels.empty() ? 0 : *std::max_element(r.labels.begin(), r.labels.end()) + 1;

  std::vector<std::array<double, 4>> acc(static_cast<std::size_t>(r.label_count), {0, 0, 0, 0});
  for (std::size_t p = 0; p < npix; ++p) {
    auto& s = acc[static_cast<std::size_t>(r.labels[p])];
    s[0] += static_cast<double>(p % static_cast<std::size_t>(nx));
    s[1] += static_cast<double>(p / static_cast<std::size_t>(nx));
    s[2] += slice.data[p];
    s[3] += 1.0;
  }
  r.centers.resize(acc.size());
  for (std::size_t c = 0; c < acc.size(); ++c) {
    r.centers[c] = {acc[c][0] / acc[c][3], acc[c][1] / acc[c][3], acc[c][2] / acc[c][3]};
  }
  return r;
}

}  // namespace pvr
