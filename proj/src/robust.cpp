#include "pvr/robust.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "pvr/error.hpp"

namespace pvr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_gaussian(double e, double sigma) {
  return -0.5 * (e / sigma) * (e / sigma) - std::log(sigma * std::sqrt(2.0 * std::numbers::pi));
}

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

double safe_log(double v) { return v > 0.0 ? std::log(v) : kNegInf; }

}  // namespace

double uniform_density(std::span<const double> e) {
  if (e.empty()) throw EmptyInputError("no residuals for the outlier density");
  const auto [lo, hi] = std::minmax_element(e.begin(), e.end());
  const double range = *hi - *lo;
  return range > 0.0 ? 1.0 / range : kZeroSpreadDensity;
}

double gaussian_density(double e, double sigma) { return std::exp(log_gaussian(e, sigma)); }

double pixel_posterior(double e, double sigma, double c, double m) {
  if (c <= 0.0) return 0.0;
  const double outlier = m * (1.0 - c);
  if (outlier <= 0.0) return 1.0;
  // p = 1 / (1 + m (1 - c) / (G c)), evaluated in log space so G may underflow.
  const double log_ratio = std::log(outlier) - std::log(c) - log_gaussian(e, sigma);
  if (log_ratio > 700.0) return 0.0;
  return 1.0 / (1.0 + std::exp(log_ratio));
}

double patch_score(std::span<const double> p) {
  if (p.empty()) return 0.0;
  double s = 0.0;
  for (double v : p) s += v * v;
  return std::sqrt(s / static_cast<double>(p.size()));
}

double mixture_log_likelihood(std::span<const PatchResiduals> residuals, double sigma2, double c,
                              double m) {
  const double sigma = std::sqrt(sigma2);
  const double log_c = safe_log(c);
  const double log_out = safe_log((1.0 - c) * m);
  double ll = 0.0;
  for (const auto& r : residuals) {
    for (double e : r) {
      if (std::isfinite(e)) ll += log_add(log_c + log_gaussian(e, sigma), log_out);
    }
  }
  return ll;
}

EMResult em_update(std::span<const PatchResiduals> residuals, const EMState& previous,
                   const EMConfig& cfg) {
  std::vector<double> flat;
  for (const auto& r : residuals) {
    for (double e : r) {
      if (std::isfinite(e)) flat.push_back(e);
    }
  }
  EMResult out;
  out.state = previous;
  out.state.density = uniform_density(flat);
  out.state.zero_spread = out.state.density == kZeroSpreadDensity;

  const double floor = cfg.sigma_floor_fraction * cfg.intensity_range * cfg.intensity_range;
  if (!out.state.initialized) {
    double s = 0.0;
    for (double e : flat) s += e * e;
    out.state.sigma2 = s / static_cast<double>(flat.size());
    out.state.mix = cfg.initial_mix;
    out.state.initialized = true;
  }
  out.state.sigma2 = std::max(out.state.sigma2, floor);
  out.state.log_likelihood.clear();
  out.state.rounds = 0;

  if (out.state.zero_spread) {
    // Every residual is the same: nothing to separate.
    out.state.log_likelihood.push_back(
        mixture_log_likelihood(residuals, out.state.sigma2, out.state.mix, out.state.density));
    out.state.rounds = 1;
    for (const auto& r : residuals) {
      std::vector<double> p(r.size());
      std::size_t live = 0;
      for (std::size_t i = 0; i < r.size(); ++i) {
        p[i] = 1.0;
        live += std::isfinite(r[i]) ? 1 : 0;
      }
      out.posteriors.push_back(std::move(p));
      out.scores.push_back(live > 0 ? 1.0 : 0.0);
      out.outlier.push_back(0);
    }
    return out;
  }

  const double m = out.state.density;
  double ll = mixture_log_likelihood(residuals, out.state.sigma2, out.state.mix, m);
  out.state.log_likelihood.push_back(ll);
  for (int round = 0; round < cfg.max_rounds; ++round) {
    const double sigma = std::sqrt(out.state.sigma2);
    double sp = 0.0, spe2 = 0.0;
    for (double e : flat) {
      const double p = pixel_posterior(e, sigma, out.state.mix, m);
      sp += p;
      spe2 += p * e * e;
    }
    if (sp > 0.0) out.state.sigma2 = std::max(spe2 / sp, floor);
    out.state.mix = sp / static_cast<double>(flat.size());
    const double next = mixture_log_likelihood(residuals, out.state.sigma2, out.state.mix, m);
    out.state.log_likelihood.push_back(next);
    ++out.state.rounds;
    const double gain = next - ll;
    ll = next;
    if (gain < cfg.tolerance * std::abs(ll)) break;
  }

  const double sigma = std::sqrt(out.state.sigma2);
  for (const auto& r : residuals) {
    std::vector<double> p(r.size(), 1.0);
    std::vector<double> live;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (!std::isfinite(r[i])) continue;
      p[i] = pixel_posterior(r[i], sigma, out.state.mix, m);
      live.push_back(p[i]);
    }
    const double score = patch_score(live);
    const bool outlier = !live.empty() && score < cfg.threshold;
    out.posteriors.push_back(std::move(p));
    out.scores.push_back(score);
    out.outlier.push_back(outlier ? 1 : 0);
    out.excluded += outlier ? 1 : 0;
  }
  return out;
}

void apply_em(std::vector<Patch>& patches, const EMResult& result) {
  if (result.posteriors.size() != patches.size()) {
    throw ParameterError("EM result does not match the patch list");
  }
  for (std::size_t i = 0; i < patches.size(); ++i) {
    patches[i].posterior = result.posteriors[i];
    patches[i].score = result.scores[i];
    patches[i].excluded = result.outlier[i] != 0;
  }
}

std::vector<PatchResiduals> compute_residuals(const ForwardModel& model, const Volume& recon,
                                              std::span<const Patch> patches, int workers,
                                              double background) {
  std::vector<PatchResiduals> out(patches.size());
  parallel_for(patches.size(), effective_workers(workers), [&](std::size_t i, int) {
    const Patch& p = patches[i];
    const SimulatedPatch sim = simulate_patch(model, recon, p);
    PatchResiduals r(p.pixels.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t n = 0; n < p.pixels.size(); ++n) {
      if (!sim.observed[n]) continue;
      const double y = model.intensity(p, n);
      if (std::abs(y) <= background && std::abs(sim.values[n]) <= background) continue;
      r[n] = y - sim.values[n];
    }
    out[i] = std::move(r);
  });
  return out;
}

Volume rigidity_map(const ForwardModel& model, std::span<const Patch> patches, int workers,
                    bool deterministic) {
  const Geometry& g = model.recon_geometry();
  const int w = effective_workers(workers);
  ScatterBuffers buf(g.voxel_count(), w, deterministic);
  parallel_for(patches.size(), w, [&](std::size_t i, int worker) {
    const Patch& p = patches[i];
    std::vector<double> values(p.pixels.size());
    const std::vector<double> ones(p.pixels.size(), 1.0);
    for (std::size_t n = 0; n < p.pixels.size(); ++n) {
      const double post = n < p.posterior.size() ? p.posterior[n] : 1.0;
      values[n] = post * p.score;
    }
    scatter_patch(model, p, values, ones, buf, worker);
  });
  const std::vector<double> num = buf.numerator.reduce();
  const std::vector<double> conf = buf.confidence.reduce();
  Volume map(g);
  for (std::size_t n = 0; n < num.size(); ++n) {
    if (conf[n] > 1e-2) map[n] = std::clamp(num[n] / conf[n], 0.0, 1.0);
  }
  return map;
}

}  // namespace pvr
