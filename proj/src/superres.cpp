#include "pvr/superres.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/LU>

#include "pvr/error.hpp"

namespace pvr {

SliceProjector::SliceProjector(const Geometry& recon, const Stack& stack, int slice,
                               const RigidTransform& pose, const Psf& psf)
    : psf_(&psf), dims_(recon.dims) {
  const Geometry& sg = stack.geometry();
  const Eigen::Matrix3d frame = pose.rotation_matrix() * sg.axes;  // slice axes in recon world
  const Eigen::Matrix3d lin = recon.index_to_world_linear();
  const Eigen::Matrix3d lin_inv = lin.inverse();
  to_local_ = frame.transpose() * lin;
  const Eigen::Vector3d c00 = pose.apply(sg.world(Eigen::Vector3d(0, 0, slice)));
  local_origin_ = frame.transpose() * (recon.origin - c00);
  spacing_x_ = sg.spacing.x();
  spacing_y_ = sg.spacing.y();
  center_base_ = lin_inv * (c00 - recon.origin);
  center_step_x_ = lin_inv * frame.col(0) * spacing_x_;
  center_step_y_ = lin_inv * frame.col(1) * spacing_y_;
  const Eigen::Matrix3d local_to_index = lin_inv * frame;
  half_extent_ = local_to_index.cwiseAbs() * psf.radius();
}

bool SliceProjector::footprint(int x, int y, Footprint& out) const {
  out.clear();
  const Eigen::Vector3d c = center_base_ + x * center_step_x_ + y * center_step_y_;
  int lo[3], hi[3], full_lo[3], full_hi[3];
  bool clipped = false;
  for (int a = 0; a < 3; ++a) {
    full_lo[a] = static_cast<int>(std::ceil(c[a] - half_extent_[a]));
    full_hi[a] = static_cast<int>(std::floor(c[a] + half_extent_[a]));
    lo[a] = std::max(0, full_lo[a]);
    hi[a] = std::min(dims_[static_cast<std::size_t>(a)] - 1, full_hi[a]);
    if (lo[a] > hi[a]) return false;
    clipped = clipped || lo[a] != full_lo[a] || hi[a] != full_hi[a];
  }
  const Eigen::Vector3d offset = local_origin_ - Eigen::Vector3d(x * spacing_x_, y * spacing_y_, 0.0);
  const Eigen::Vector3d di = to_local_.col(0);
  const Eigen::Vector3d dj = to_local_.col(1);
  const Eigen::Vector3d dk = to_local_.col(2);
  const std::size_t nx = static_cast<std::size_t>(dims_[0]);
  const std::size_t nxy = nx * static_cast<std::size_t>(dims_[1]);
  double sum = 0.0;
  for (int k = lo[2]; k <= hi[2]; ++k) {
    for (int j = lo[1]; j <= hi[1]; ++j) {
      Eigen::Vector3d p = offset + lo[0] * di + j * dj + k * dk;
      std::size_t idx = static_cast<std::size_t>(lo[0]) + nx * static_cast<std::size_t>(j) +
                        nxy * static_cast<std::size_t>(k);
      for (int i = lo[0]; i <= hi[0]; ++i, p += di, ++idx) {
        const double w = psf_->weight(p.x(), p.y(), p.z());
        if (w == 0.0) continue;
        out.index.push_back(static_cast<std::uint32_t>(idx));
        out.weight.push_back(w);
        sum += w;
      }
    }
  }
  if (clipped && sum > 0.0) {
    // With signed lobes a truncated kernel can sum to almost nothing, so a
    // footprint cut by the grid edge must keep more than half its full mass.
    double full = 0.0;
    for (int k = full_lo[2]; k <= full_hi[2]; ++k) {
      for (int j = full_lo[1]; j <= full_hi[1]; ++j) {
        Eigen::Vector3d p = offset + full_lo[0] * di + j * dj + k * dk;
        for (int i = full_lo[0]; i <= full_hi[0]; ++i, p += di) full += psf_->weight(p.x(), p.y(), p.z());
      }
    }
    if (!(sum > 0.5 * full)) sum = 0.0;
  }
  if (!(sum > 0.0)) {
    out.clear();
    return false;
  }
  const double inv = 1.0 / sum;
  for (double& w : out.weight) w *= inv;
  return true;
}

ForwardModel::ForwardModel(const Geometry& recon, const std::vector<Stack>& stacks, const PsfConfig& cfg)
    : recon_(recon), stacks_(&stacks), cfg_(cfg) {
  recon_.validate();
  psfs_.reserve(stacks.size());
  for (const auto& s : stacks) {
    psfs_.emplace_back(s.geometry().spacing.x(), s.geometry().spacing.y(), s.thickness(), cfg);
  }
}

double ForwardModel::intensity(const Patch& patch, std::size_t n) const {
  return (*stacks_)[static_cast<std::size_t>(patch.stack)].slice(patch.slice).data[patch.pixels[n]];
}

SimulatedPatch simulate_patch(const ForwardModel& model, const Volume& recon, const Patch& patch) {
  const SliceProjector proj = model.projector(patch);
  SimulatedPatch out;
  out.values.assign(patch.pixels.size(), 0.0);
  out.observed.assign(patch.pixels.size(), 0);
  Footprint fp;
  const auto x = recon.data();
  for (std::size_t n = 0; n < patch.pixels.size(); ++n) {
    if (!proj.footprint(patch.pixel_x(n), patch.pixel_y(n), fp)) continue;
    double s = 0.0;
    for (std::size_t m = 0; m < fp.index.size(); ++m) s += fp.weight[m] * x[fp.index[m]];
    out.values[n] = s;
    out.observed[n] = 1;
  }
  return out;
}

void scatter_patch(const ForwardModel& model, const Patch& patch, std::span<const double> values,
                   std::span<const double> weights, ScatterBuffers& buffers, int worker) {
  if (values.size() != patch.pixels.size() || weights.size() != patch.pixels.size()) {
    throw ParameterError("scatter_patch: values and weights must match the patch pixel count");
  }
  const SliceProjector proj = model.projector(patch);
  Footprint fp;
  for (std::size_t n = 0; n < patch.pixels.size(); ++n) {
    if (weights[n] == 0.0) continue;
    if (!proj.footprint(patch.pixel_x(n), patch.pixel_y(n), fp)) continue;
    for (std::size_t m = 0; m < fp.index.size(); ++m) {
      const double w = weights[n] * fp.weight[m];
      buffers.numerator.add(worker, fp.index[m], w * values[n]);
      buffers.confidence.add(worker, fp.index[m], w);
    }
  }
}

double pixel_weight(const Patch& patch, std::size_t n) {
  if (patch.excluded) return 0.0;
  const double p = n < patch.posterior.size() ? patch.posterior[n] : 1.0;
  return p * patch.score;
}

DataTerm data_term(const ForwardModel& model, const Volume& recon, std::span<const Patch> patches,
                   const SrOptions& opts) {
  const int workers = effective_workers(opts.workers);
  ScatterBuffers buf(recon.size(), workers, opts.deterministic);
  std::vector<double> energy(patches.size(), 0.0);
  std::vector<Footprint> scratch(static_cast<std::size_t>(workers));
  const auto x = recon.data();

  parallel_for(patches.size(), workers, [&](std::size_t pi, int worker) {
    const Patch& patch = patches[pi];
    if (patch.excluded) return;
    const SliceProjector proj = model.projector(patch);
    const SliceView view = model.stacks()[static_cast<std::size_t>(patch.stack)].slice(patch.slice);
    Footprint& fp = scratch[static_cast<std::size_t>(worker)];
    double e = 0.0;
    for (std::size_t n = 0; n < patch.pixels.size(); ++n) {
      const double weight = pixel_weight(patch, n);
      if (weight == 0.0) continue;
      if (!proj.footprint(patch.pixel_x(n), patch.pixel_y(n), fp)) continue;
      double s = 0.0;
      for (std::size_t m = 0; m < fp.index.size(); ++m) s += fp.weight[m] * x[fp.index[m]];
      const double r = view.data[patch.pixels[n]] - s;
      double abs_sum = 0.0;
      for (double w : fp.weight) abs_sum += std::abs(w);
      for (std::size_t m = 0; m < fp.index.size(); ++m) {
        const double w = weight * fp.weight[m];
        buf.numerator.add(worker, fp.index[m], w * r);
        buf.confidence.add(worker, fp.index[m], std::abs(w) * abs_sum);
      }
      e += weight * r * r;
    }
    energy[pi] = e;
  });

  DataTerm out;
  out.numerator = buf.numerator.reduce();
  out.confidence = buf.confidence.reduce();
  double total = 0.0;
  for (double e : energy) total += e;
  out.energy = 0.5 * total;
  out.residual_norm = std::sqrt(total);
  return out;
}

std::vector<double> laplacian_gradient(const Volume& x) {
  const auto& d = x.dims();
  std::vector<double> g(x.size(), 0.0);
  const std::ptrdiff_t sx = 1, sy = d[0], sz = static_cast<std::ptrdiff_t>(d[0]) * d[1];
  std::size_t n = 0;
  for (int k = 0; k < d[2]; ++k) {
    for (int j = 0; j < d[1]; ++j) {
      for (int i = 0; i < d[0]; ++i, ++n) {
        const double v = x[n];
        double s = 0.0;
        if (i > 0) s += v - x[n - sx];
        if (i + 1 < d[0]) s += v - x[n + sx];
        if (j > 0) s += v - x[n - static_cast<std::size_t>(sy)];
        if (j + 1 < d[1]) s += v - x[n + static_cast<std::size_t>(sy)];
        if (k > 0) s += v - x[n - static_cast<std::size_t>(sz)];
        if (k + 1 < d[2]) s += v - x[n + static_cast<std::size_t>(sz)];
        g[n] = s;
      }
    }
  }
  return g;
}

void fill_unobserved(Volume& x, std::span<const double> confidence, double threshold) {
  const auto& d = x.dims();
  std::vector<std::uint8_t> known(x.size());
  for (std::size_t n = 0; n < x.size(); ++n) known[n] = confidence[n] > threshold ? 1 : 0;

  auto neighbours = [&](std::size_t n, auto&& visit) {
    const int i = static_cast<int>(n % static_cast<std::size_t>(d[0]));
    const int j = static_cast<int>((n / static_cast<std::size_t>(d[0])) % static_cast<std::size_t>(d[1]));
    const int k = static_cast<int>(n / (static_cast<std::size_t>(d[0]) * d[1]));
    for (int dz = -1; dz <= 1; ++dz) {
      if (k + dz < 0 || k + dz >= d[2]) continue;
      for (int dy = -1; dy <= 1; ++dy) {
        if (j + dy < 0 || j + dy >= d[1]) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          if ((dx | dy | dz) == 0 || i + dx < 0 || i + dx >= d[0]) continue;
          visit(x.linear_index(i + dx, j + dy, k + dz));
        }
      }
    }
  };

  std::vector<std::size_t> frontier;
  for (std::size_t n = 0; n < x.size(); ++n) {
    if (known[n]) continue;
    bool touches = false;
    neighbours(n, [&](std::size_t m) { touches = touches || known[m]; });
    if (touches) frontier.push_back(n);
  }
  std::vector<std::uint8_t> queued(x.size(), 0);
  std::vector<double> values;
  while (!frontier.empty()) {
    values.assign(frontier.size(), 0.0);
    for (std::size_t f = 0; f < frontier.size(); ++f) {
      double sum = 0.0;
      int count = 0;
      neighbours(frontier[f], [&](std::size_t m) {
        if (known[m]) {
          sum += x[m];
          ++count;
        }
      });
      values[f] = sum / count;
    }
    for (std::size_t f = 0; f < frontier.size(); ++f) {
      x[frontier[f]] = values[f];
      known[frontier[f]] = 1;
    }
    std::vector<std::size_t> next;
    for (std::size_t n : frontier) {
      neighbours(n, [&](std::size_t m) {
        if (!known[m] && !queued[m]) {
          queued[m] = 1;
          next.push_back(m);
        }
      });
    }
    std::sort(next.begin(), next.end());
    frontier = std::move(next);
  }
}

SrStepInfo sr_iteration(ReconState& state, const ForwardModel& model, std::span<const Patch> patches,
                        const SrOptions& opts) {
  DataTerm dt = data_term(model, state.recon, patches, opts);
  SrStepInfo info{dt.residual_norm, dt.energy};
  ++state.iteration;
  if (state.alpha == 0.0) return info;

  const std::vector<double> lap =
      state.lambda != 0.0 ? laplacian_gradient(state.recon) : std::vector<double>(state.recon.size(), 0.0);
  Volume& x = state.recon;
  for (std::size_t n = 0; n < x.size(); ++n) {
    if (dt.confidence[n] <= opts.min_confidence) continue;
    x[n] += state.alpha * dt.numerator[n] / dt.confidence[n] - state.alpha * state.lambda * lap[n];
  }
  fill_unobserved(x, dt.confidence, opts.min_confidence);
  state.confidence = Volume(x.geometry(), std::move(dt.confidence));
  return info;
}

Geometry reconstruction_grid(const std::vector<Stack>& stacks, int template_index, double spacing,
                             const Volume* mask) {
  if (!(spacing > 0.0)) throw ParameterError("reconstruction spacing must be > 0");
  if (stacks.empty()) throw EmptyInputError("no stacks to reconstruct");
  if (template_index < 0 || template_index >= static_cast<int>(stacks.size())) {
    throw ParameterError("template index out of range");
  }
  const Eigen::Matrix3d axes = stacks[static_cast<std::size_t>(template_index)].geometry().axes;
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  auto include = [&](const Eigen::Vector3d& world) {
    const Eigen::Vector3d p = axes.transpose() * world;
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  };

  if (mask != nullptr) {
    const Geometry& mg = mask->geometry();
    for (int k = 0; k < mg.dims[2]; ++k) {
      for (int j = 0; j < mg.dims[1]; ++j) {
        for (int i = 0; i < mg.dims[0]; ++i) {
          if (mask->at(i, j, k) > 0.0) include(mg.world(Eigen::Vector3d(i, j, k)));
        }
      }
    }
    if (!std::isfinite(lo.x())) throw EmptyInputError("mask has no foreground voxels");
  } else {
    for (const auto& s : stacks) {
      const double cx[2] = {0.0, static_cast<double>(s.nx() - 1)};
      const double cy[2] = {0.0, static_cast<double>(s.ny() - 1)};
      for (int k = 0; k < s.slice_count(); ++k) {
        for (double x : cx) {
          for (double y : cy) include(s.slice_pose(k).apply(s.pixel_world(x, y, k)));
        }
      }
    }
  }

  Geometry g;
  g.axes = axes;
  g.spacing = Eigen::Vector3d::Constant(spacing);
  Eigen::Vector3d mid = 0.5 * (lo + hi);
  Eigen::Vector3d half;
  for (int a = 0; a < 3; ++a) {
    const int n = static_cast<int>(std::ceil((hi[a] - lo[a]) / spacing - 1e-9)) + 1;
    g.dims[static_cast<std::size_t>(a)] = n;
    half[a] = (n - 1) * spacing * 0.5;
  }
  g.origin = axes * (mid - half);
  g.validate();
  return g;
}

ReconState initialize_recon(const ForwardModel& model, std::span<const Patch> patches,
                            const SrOptions& opts) {
  if (patches.empty()) throw EmptyInputError("no patches to reconstruct");
  const int workers = effective_workers(opts.workers);
  const Geometry& g = model.recon_geometry();
  ScatterBuffers buf(g.voxel_count(), workers, opts.deterministic);
  parallel_for(patches.size(), workers, [&](std::size_t pi, int worker) {
    const Patch& p = patches[pi];
    std::vector<double> values(p.pixels.size());
    std::vector<double> weights(p.pixels.size());
    for (std::size_t n = 0; n < p.pixels.size(); ++n) {
      values[n] = model.intensity(p, n);
      weights[n] = pixel_weight(p, n);
    }
    scatter_patch(model, p, values, weights, buf, worker);
  });
  const std::vector<double> num = buf.numerator.reduce();
  std::vector<double> conf = buf.confidence.reduce();
  ReconState state{Volume(g), Volume(g), 0, 0.9, 0.01};
  for (std::size_t n = 0; n < num.size(); ++n) {
    if (conf[n] > opts.min_confidence) state.recon[n] = num[n] / conf[n];
  }
  fill_unobserved(state.recon, conf, opts.min_confidence);
  state.confidence = Volume(g, std::move(conf));
  return state;
}

ReconState initialize_recon(const std::vector<Stack>& stacks, int template_index, double spacing,
                            const PsfConfig& psf, const SrOptions& opts, const Volume* mask) {
  const Geometry g = reconstruction_grid(stacks, template_index, spacing, mask);
  const ForwardModel model(g, stacks, psf);
  std::vector<Patch> patches;
  for (int s = 0; s < static_cast<int>(stacks.size()); ++s) {
    for (int k = 0; k < stacks[static_cast<std::size_t>(s)].slice_count(); ++k) {
      Patch p = whole_slice_patch(stacks[static_cast<std::size_t>(s)].slice(k));
      p.stack = s;
      p.slice = k;
      p.pose = stacks[static_cast<std::size_t>(s)].slice_pose(k);
      patches.push_back(std::move(p));
    }
  }
  return initialize_recon(model, patches, opts);
}

}  // namespace pvr
