#include "pvr/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pvr/error.hpp"
#include "pvr/similarity.hpp"

namespace pvr {

void RegistrationConfig::validate() const {
  if (blur_sigmas.empty()) throw ParameterError("registration needs at least one level");
  for (double s : blur_sigmas) {
    if (s < 0.0) throw ParameterError("registration blur sigma must be >= 0");
  }
  if (max_iterations < 1) throw ParameterError("registration iterations must be >= 1");
  if (!(rotation_step > 0.0) || !(translation_step > 0.0)) {
    throw ParameterError("registration steps must be > 0");
  }
  if (halvings < 0) throw ParameterError("registration halvings must be >= 0");
  if (!(epsilon > 0.0)) throw ParameterError("registration epsilon must be > 0");
  if (min_pixels < 2) throw ParameterError("registration min_pixels must be >= 2");
  if (coarse_stride < 1) throw ParameterError("registration coarse stride must be >= 1");
  if (!(min_foreground >= 0.0 && min_foreground <= 1.0)) {
    throw ParameterError("registration min_foreground must be in [0, 1]");
  }
}

RegistrationPyramid::RegistrationPyramid(const Volume& target, const RegistrationConfig& cfg) {
  cfg.validate();
  levels_.reserve(cfg.blur_sigmas.size());
  for (double s : cfg.blur_sigmas) levels_.push_back(gaussian_blur(target, s));
}

RigidTransform apply_params(const RigidParams& p, const Eigen::Vector3d& center,
                            const RigidTransform& base) {
  return RigidTransform::about_center({p[0], p[1], p[2]}, {p[3], p[4], p[5]}, center).compose(base);
}

AscentResult coordinate_ascent(const std::function<std::optional<double>(const RigidParams&)>& f,
                               const RigidParams& start, double rotation_step,
                               double translation_step, int max_iterations, int halvings,
                               double epsilon) {
  AscentResult r;
  r.params = start;
  const auto v0 = f(start);
  r.evaluations = 1;
  if (!v0) {
    r.value = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.value = *v0;
  r.accepted.push_back(r.value);
  double steps[2] = {rotation_step, translation_step};
  int halved = 0;
  for (int it = 0; it < max_iterations; ++it) {
    // Central differences per coordinate, in units of the current steps.
    std::array<double, 6> grad{}, newton{};
    double norm2 = 0.0;
    bool have_newton = true;
    for (int p = 0; p < 6; ++p) {
      const auto i = static_cast<std::size_t>(p);
      const double h = steps[p < 3 ? 0 : 1];
      RigidParams plus = r.params, minus = r.params;
      plus[i] += h;
      minus[i] -= h;
      const auto fp = f(plus);
      const auto fm = f(minus);
      r.evaluations += 2;
      double g = 0.0;
      if (fp && fm) {
        g = 0.5 * (*fp - *fm);
        const double curv = *fp - 2.0 * r.value + *fm;
        // Diagonal Newton offset in step units, clamped to one step.
        if (curv < 0.0) {
          newton[i] = std::clamp(-g / curv, -1.0, 1.0);
        } else {
          newton[i] = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
        }
      } else {
        have_newton = false;
        if (fp) g = *fp - r.value;
        else if (fm) g = r.value - *fm;
      }
      grad[i] = g;
      norm2 += g * g;
    }
    bool improved = false;
    auto try_move = [&](const std::array<double, 6>& d, double scale) {
      RigidParams trial = r.params;
      for (int p = 0; p < 6; ++p) {
        trial[static_cast<std::size_t>(p)] += scale * steps[p < 3 ? 0 : 1] * d[static_cast<std::size_t>(p)];
      }
      const auto v = f(trial);
      ++r.evaluations;
      if (!v || !(*v > r.value + epsilon)) return false;
      r.params = trial;
      r.value = *v;
      r.accepted.push_back(r.value);
      return true;
    };
    if (have_newton) improved = try_move(newton, 1.0);
    if (!improved && norm2 > 0.0) {
      const double inv = 1.0 / std::sqrt(norm2);
      for (auto& g : grad) g *= inv;
      improved = try_move(grad, 1.0);
    }
    if (!improved) {
      if (halved >= halvings) break;
      steps[0] *= 0.5;
      steps[1] *= 0.5;
      ++halved;
    }
  }
  return r;
}

namespace {

// Pixel world positions (before pose) and intensities of a patch.
struct PatchSamples {
  std::vector<Eigen::Vector3d> position;
  std::vector<double> intensity;
  std::vector<std::uint8_t> coarse;  // on the subsampling lattice
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
};

PatchSamples gather(const Patch& patch, const Stack& stack, int stride) {
  PatchSamples s;
  const SliceView view = stack.slice(patch.slice);
  s.position.reserve(patch.pixels.size());
  s.intensity.reserve(patch.pixels.size());
  s.coarse.reserve(patch.pixels.size());
  for (std::size_t n = 0; n < patch.pixels.size(); ++n) {
    const int x = patch.pixel_x(n), y = patch.pixel_y(n);
    s.position.push_back(stack.pixel_world(x, y, patch.slice));
    s.intensity.push_back(view.data[patch.pixels[n]]);
    s.coarse.push_back(x % stride == 0 && y % stride == 0 ? 1 : 0);
    s.centroid += s.position.back();
  }
  if (!patch.pixels.empty()) s.centroid /= static_cast<double>(patch.pixels.size());
  return s;
}

class SampledCc {
 public:
  SampledCc(const PatchSamples& s, int min_pixels) : s_(s), min_pixels_(min_pixels) {
    a_.reserve(s.position.size());
    b_.reserve(s.position.size());
  }

  std::optional<double> operator()(const RigidTransform& pose, const Volume& target, bool coarse) {
    const Geometry& g = target.geometry();
    const Eigen::Matrix3d lin = g.spacing.cwiseInverse().asDiagonal() * g.axes.transpose();
    const Eigen::Matrix3d m = lin * pose.rotation_matrix();
    const Eigen::Vector3d off = lin * (pose.translation() - g.origin);
    a_.clear();
    b_.clear();
    for (std::size_t n = 0; n < s_.position.size(); ++n) {
      if (coarse && !s_.coarse[n]) continue;
      if (auto v = sample_index(target, m * s_.position[n] + off)) {
        a_.push_back(s_.intensity[n]);
        b_.push_back(*v);
      }
    }
    if (static_cast<int>(a_.size()) < min_pixels_) return std::nullopt;
    return cc_similarity(a_, b_);
  }

 private:
  const PatchSamples& s_;
  int min_pixels_;
  std::vector<double> a_, b_;
};

}  // namespace

std::optional<double> patch_similarity(const Patch& patch, const Stack& stack,
                                       const RigidTransform& pose, const Volume& target,
                                       int min_pixels, int stride) {
  const PatchSamples s = gather(patch, stack, std::max(1, stride));
  SampledCc cc(s, min_pixels);
  return cc(pose, target, stride > 1);
}

RegistrationResult register_patch_to_volume(const Patch& patch, const Stack& stack,
                                            const RegistrationPyramid& target,
                                            const RegistrationConfig& cfg) {
  cfg.validate();
  RegistrationResult out;
  out.pose = patch.pose;
  const PatchSamples samples = gather(patch, stack, cfg.coarse_stride);
  SampledCc cc(samples, cfg.min_pixels);
  const Volume& finest = target.level(target.size() - 1);
  const auto initial = cc(patch.pose, finest, false);
  if (!initial) {
    out.registrable = false;
    return out;
  }
  out.similarity = *initial;
  if (cfg.foreground_level >= 0.0) {
    const auto inside = std::count_if(samples.intensity.begin(), samples.intensity.end(),
                                      [&](double v) { return v > cfg.foreground_level; });
    if (static_cast<double>(inside) < cfg.min_foreground * static_cast<double>(samples.intensity.size())) {
      return out;
    }
  }
  const Eigen::Vector3d center = patch.pose.apply(samples.centroid);

  RigidParams params{};
  for (int l = 0; l < target.size(); ++l) {
    const double sigma = cfg.blur_sigmas[static_cast<std::size_t>(l)];
    const bool coarse = sigma >= 1.0 && cfg.coarse_stride > 1;
    const Volume& level = target.level(l);
    auto f = [&](const RigidParams& p) {
      return cc(apply_params(p, center, patch.pose), level, coarse);
    };
    const double scale = std::ldexp(1.0, -l);
    AscentResult r = coordinate_ascent(f, params, cfg.rotation_step * scale,
                                       cfg.translation_step * scale, cfg.max_iterations,
                                       cfg.halvings, cfg.epsilon);
    if (std::isnan(r.value)) continue;
    params = r.params;
    out.accepted.insert(out.accepted.end(), r.accepted.begin(), r.accepted.end());
  }

  const RigidTransform candidate = apply_params(params, center, patch.pose);
  const auto final_cc = cc(candidate, finest, false);
  if (final_cc && *final_cc >= *initial) {
    out.pose = candidate;
    out.similarity = *final_cc;
  }
  return out;
}

RegistrationResult register_patch_to_volume(const Patch& patch, const Stack& stack,
                                            const Volume& recon, const RegistrationConfig& cfg) {
  return register_patch_to_volume(patch, stack, RegistrationPyramid(recon, cfg), cfg);
}

RigidTransform register_stack_to_volume(const Stack& stack, const Volume& target,
                                        const RegistrationConfig& cfg, const RigidTransform& start) {
  cfg.validate();
  const Geometry& sg = stack.geometry();
  PatchSamples s;
  const auto total = sg.voxel_count();
  s.position.reserve(total);
  s.intensity.reserve(total);
  s.coarse.reserve(total);
  for (int k = 0; k < sg.dims[2]; ++k) {
    for (int j = 0; j < sg.dims[1]; ++j) {
      for (int i = 0; i < sg.dims[0]; ++i) {
        s.position.push_back(sg.world(Eigen::Vector3d(i, j, k)));
        s.intensity.push_back(stack.image().at(i, j, k));
        s.coarse.push_back(i % cfg.coarse_stride == 0 && j % cfg.coarse_stride == 0 ? 1 : 0);
      }
    }
  }
  const int min_valid = std::max(cfg.min_pixels, static_cast<int>(std::ceil(0.1 * static_cast<double>(total))));
  SampledCc full(s, min_valid);
  const auto initial = full(start, target, false);
  if (!initial) {
    throw RegistrationFailure("stack overlaps the target in less than 10% of its voxels");
  }
  // Coarse levels check overlap on the subsampled lattice only.
  std::size_t coarse_total = 0;
  for (auto c : s.coarse) coarse_total += c;
  SampledCc subsampled(s, std::max(cfg.min_pixels, static_cast<int>(std::ceil(0.1 * static_cast<double>(coarse_total)))));

  const Eigen::Vector3d center = start.apply(sg.center());
  RigidParams params{};
  for (int l = 0; l < cfg.levels(); ++l) {
    const double sigma = cfg.blur_sigmas[static_cast<std::size_t>(l)];
    const bool coarse = sigma >= 1.0 && cfg.coarse_stride > 1;
    const Volume level = gaussian_blur(target, sigma);
    auto f = [&](const RigidParams& p) {
      const RigidTransform t = apply_params(p, center, start);
      return coarse ? subsampled(t, level, true) : full(t, level, false);
    };
    const double scale = std::ldexp(1.0, -l);
    const AscentResult r = coordinate_ascent(f, params, cfg.rotation_step * scale,
                                             cfg.translation_step * scale, cfg.max_iterations,
                                             cfg.halvings, cfg.epsilon);
    if (!std::isnan(r.value)) params = r.params;
  }
  const RigidTransform result = apply_params(params, center, start);
  const auto final_cc = full(result, target, false);
  if (!final_cc || *final_cc < *initial) return start;
  return result;
}

}  // namespace pvr
