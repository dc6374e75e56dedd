#include "pvr/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>

#include "pvr/error.hpp"
#include "pvr/image_io.hpp"
#include "pvr/manifest.hpp"
#include "pvr/nifti.hpp"
#include "pvr/parallel.hpp"
#include "pvr/similarity.hpp"

namespace pvr {

const char* to_string(Mode m) { return m == Mode::svr ? "svr" : "pvr"; }

Mode parse_mode(const std::string& s) {
  std::string l(s);
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "svr") return Mode::svr;
  if (l == "pvr") return Mode::pvr;
  throw ParameterError("unknown mode: " + s);
}

OutputPaths OutputPaths::resolved() const {
  OutputPaths o = *this;
  std::string stem = recon.filename().string();
  for (const char* ext : {".nii.gz", ".nii"}) {
    const std::string e(ext);
    if (stem.size() > e.size() && stem.compare(stem.size() - e.size(), e.size(), e) == 0) {
      stem.resize(stem.size() - e.size());
      break;
    }
  }
  const auto dir = recon.parent_path();
  auto fill = [&](std::filesystem::path& p, const std::string& suffix) {
    if (p.empty()) p = dir / (stem + suffix);
  };
  fill(o.confidence, "_confidence.nii");
  fill(o.rigidity, "_rigidity.nii");
  fill(o.metrics_csv, "_metrics.csv");
  fill(o.overhead_csv, "_overhead.csv");
  fill(o.poses_csv, "_poses.csv");
  fill(o.em_csv, "_em.csv");
  fill(o.manifest, "_manifest.txt");
  return o;
}

void PipelineConfig::validate() const {
  PatchPlan plan = effective_plan();
  if (plan.compactness <= 0.0) plan.compactness = 1.0;  // resolved at run time
  plan.validate();
  if (patches.multiscale && static_cast<int>(patches.scales.size()) < sr.iterations) {
    throw ParameterError("multiscale schedule needs one scale per iteration");
  }
  registration.validate();
  if (sr.iterations < 1) throw ParameterError("iterations must be >= 1");
  if (sr.inner_steps < 1) throw ParameterError("inner SR steps must be >= 1");
  if (sr.alpha < 0.0) throw ParameterError("alpha must be >= 0");
  if (sr.lambda < 0.0) throw ParameterError("lambda must be >= 0");
  if (em.max_rounds < 1) throw ParameterError("EM rounds must be >= 1");
  if (!(em.threshold >= 0.0 && em.threshold <= 1.0)) throw ParameterError("EM threshold must lie in [0, 1]");
  if (!(compactness_fraction > 0.0)) throw ParameterError("compactness fraction must be > 0");
  if (target_spacing < 0.0) throw ParameterError("target spacing must be >= 0");
}

PatchPlan PipelineConfig::effective_plan() const {
  PatchPlan p = patches;
  if (mode == Mode::svr) {
    p.shape = PatchShape::whole_slice;
    p.multiscale = false;
    p.dilation = {};
  }
  return p;
}

double adjacent_slice_score(const Stack& stack) {
  double sum = 0.0;
  int count = 0;
  for (int k = 0; k + 1 < stack.slice_count(); ++k) {
    if (auto cc = cc_similarity(stack.slice(k).data, stack.slice(k + 1).data)) {
      sum += *cc;
      ++count;
    }
  }
  return count > 0 ? sum / count : -1.0;
}

int select_template(const std::vector<Stack>& stacks, int policy) {
  if (stacks.empty()) throw ParameterError("no stacks to choose a template from");
  if (policy >= 0) {
    if (policy >= static_cast<int>(stacks.size())) throw ParameterError("template index out of range");
    return policy;
  }
  int best = 0;
  double best_score = adjacent_slice_score(stacks[0]);
  for (int i = 1; i < static_cast<int>(stacks.size()); ++i) {
    const double s = adjacent_slice_score(stacks[static_cast<std::size_t>(i)]);
    if (s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw EmptyInputError("percentile of an empty set");
  if (!(q >= 0.0 && q <= 100.0)) throw ParameterError("percentile must lie in [0, 100]");
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
  const double vlo = values[lo];
  double vhi = vlo;
  if (hi != lo) vhi = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
  return vlo + (pos - static_cast<double>(lo)) * (vhi - vlo);
}

namespace {

std::pair<double, double> robust_range(const Stack& s) {
  const std::vector<double> v(s.image().data().begin(), s.image().data().end());
  return {percentile(v, 1.0), percentile(v, 99.0)};
}

}  // namespace

IntensityMap intensity_mapping(const Stack& stack, const Stack& reference) {
  const auto [slo, shi] = robust_range(stack);
  const auto [rlo, rhi] = robust_range(reference);
  if (!(shi > slo)) throw ParameterError("cannot intensity-match a constant stack");
  IntensityMap m;
  m.scale = (rhi - rlo) / (shi - slo);
  m.offset = rlo - m.scale * slo;
  return m;
}

std::vector<IntensityMap> intensity_match(std::vector<Stack>& stacks, int template_index) {
  if (template_index < 0 || template_index >= static_cast<int>(stacks.size())) {
    throw ParameterError("template index out of range");
  }
  const Stack reference = stacks[static_cast<std::size_t>(template_index)];
  std::vector<IntensityMap> maps;
  for (auto& s : stacks) {
    const IntensityMap m = intensity_mapping(s, reference);
    for (double& v : s.image().data()) v = m.scale * v + m.offset;
    maps.push_back(m);
  }
  return maps;
}

namespace {

template <typename F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
  const std::string prefix = std::string(stage) + ": ";
  try {
    return f();
  } catch (const RegistrationFailure& e) {
    throw RegistrationFailure(prefix + e.what());
  } catch (const IoError& e) {
    throw IoError(prefix + e.what());
  } catch (const ParameterError& e) {
    throw ParameterError(prefix + e.what());
  } catch (const GeometryError& e) {
    throw GeometryError(prefix + e.what());
  } catch (const EmptyInputError& e) {
    throw EmptyInputError(prefix + e.what());
  }
}

// Core pixel nearest to the core centroid.
std::uint32_t core_center(const Patch& p) {
  double sx = 0.0, sy = 0.0;
  for (auto c : p.core) {
    sx += c % static_cast<std::uint32_t>(p.slice_nx);
    sy += c / static_cast<std::uint32_t>(p.slice_nx);
  }
  sx /= static_cast<double>(p.core.size());
  sy /= static_cast<double>(p.core.size());
  std::uint32_t best = p.core.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (auto c : p.core) {
    const double dx = static_cast<double>(c % static_cast<std::uint32_t>(p.slice_nx)) - sx;
    const double dy = static_cast<double>(c / static_cast<std::uint32_t>(p.slice_nx)) - sy;
    const double d = dx * dx + dy * dy;
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

// New patches inherit the pose of the previous patch of the same slice whose
// core holds their centre pixel (closest centre wins among overlapping cores).
void carry_poses(std::vector<Patch>& next, const std::vector<Patch>& prev) {
  std::map<std::pair<int, int>, std::vector<const Patch*>> by_slice;
  std::map<const Patch*, std::uint32_t> centers;
  for (const auto& p : prev) {
    by_slice[{p.stack, p.slice}].push_back(&p);
    centers[&p] = core_center(p);
  }
  for (auto& p : next) {
    const auto it = by_slice.find({p.stack, p.slice});
    if (it == by_slice.end()) continue;
    const std::uint32_t c = core_center(p);
    const int cx = static_cast<int>(c % static_cast<std::uint32_t>(p.slice_nx));
    const int cy = static_cast<int>(c / static_cast<std::uint32_t>(p.slice_nx));
    const Patch* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const Patch* q : it->second) {
      if (!std::binary_search(q->core.begin(), q->core.end(), c)) continue;
      const std::uint32_t qc = centers[q];
      const double dx = static_cast<int>(qc % static_cast<std::uint32_t>(p.slice_nx)) - cx;
      const double dy = static_cast<int>(qc / static_cast<std::uint32_t>(p.slice_nx)) - cy;
      const double d = dx * dx + dy * dy;
      if (d < best_d) {
        best_d = d;
        best = q;
      }
    }
    if (best != nullptr) p.pose = best->pose;
  }
}

bool inside_mask(const Volume& mask, const Eigen::Vector3d& world) {
  const Geometry& g = mask.geometry();
  const Eigen::Vector3d idx = g.index(world);
  const int i = static_cast<int>(std::lround(idx.x()));
  const int j = static_cast<int>(std::lround(idx.y()));
  const int k = static_cast<int>(std::lround(idx.z()));
  return i >= 0 && j >= 0 && k >= 0 && i < g.dims[0] && j < g.dims[1] && k < g.dims[2] &&
         mask.at(i, j, k) > 0.0;
}

void restrict_to_mask(std::vector<Patch>& patches, const std::vector<Stack>& stacks, const Volume& mask) {
  std::vector<Patch> kept;
  for (auto& p : patches) {
    const Stack& s = stacks[static_cast<std::size_t>(p.stack)];
    const bool any = std::any_of(p.core.begin(), p.core.end(), [&](std::uint32_t c) {
      const int x = static_cast<int>(c % static_cast<std::uint32_t>(p.slice_nx));
      const int y = static_cast<int>(c / static_cast<std::uint32_t>(p.slice_nx));
      return inside_mask(mask, p.pose.apply(s.pixel_world(x, y, p.slice)));
    });
    if (any) kept.push_back(std::move(p));
  }
  for (std::size_t i = 0; i < kept.size(); ++i) kept[i].id = static_cast<int>(i);
  patches = std::move(kept);
}

std::vector<Patch> whole_slices(const std::vector<Stack>& stacks) {
  std::vector<Patch> out;
  for (int s = 0; s < static_cast<int>(stacks.size()); ++s) {
    const Stack& st = stacks[static_cast<std::size_t>(s)];
    for (int k = 0; k < st.slice_count(); ++k) {
      Patch p = whole_slice_patch(st.slice(k));
      p.id = static_cast<int>(out.size());
      p.stack = s;
      p.slice = k;
      p.pose = st.slice_pose(k);
      out.push_back(std::move(p));
    }
  }
  return out;
}

constexpr double kBackgroundFraction = 0.01;
// Patches mostly below this fraction of the range are not re-registered.
constexpr double kForegroundFraction = 0.05;

double intensity_range(const std::vector<Stack>& stacks) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : stacks) {
    lo = std::min(lo, s.image().min_value());
    hi = std::max(hi, s.image().max_value());
  }
  return hi > lo ? hi - lo : 1.0;
}

}  // namespace

RunResult run(std::vector<Stack> stacks, const PipelineConfig& cfg, const Volume* mask) {
  const auto start = std::chrono::steady_clock::now();
  staged("config", [&] { cfg.validate(); });
  if (stacks.empty()) throw EmptyInputError("no input stacks");
  const int workers = effective_workers(cfg.workers);

  RunResult result;
  result.template_index = staged("template", [&] { return select_template(stacks, cfg.template_index); });
  const int t = result.template_index;
  result.intensity_maps = staged("intensity matching", [&] { return intensity_match(stacks, t); });

  result.stack_transforms.assign(stacks.size(), RigidTransform());
  if (cfg.register_stacks && stacks.size() > 1) {
    staged("stack registration", [&] {
      const Volume& target = stacks[static_cast<std::size_t>(t)].image();
      for (std::size_t s = 0; s < stacks.size(); ++s) {
        if (static_cast<int>(s) == t) continue;
        result.stack_transforms[s] = register_stack_to_volume(stacks[s], target, cfg.registration);
        stacks[s].set_stack_pose(result.stack_transforms[s]);
      }
    });
  }

  PatchPlan plan = cfg.effective_plan();
  if (plan.shape == PatchShape::superpixel && plan.compactness <= 0.0) {
    const auto [lo, hi] = robust_range(stacks[static_cast<std::size_t>(t)]);
    plan.compactness = cfg.compactness_fraction * (hi > lo ? hi - lo : 1.0);
  }
  if (plan.multiscale && plan.scales.empty()) plan.scales = PatchPlan::default_scales(cfg.sr.iterations);

  const double spacing = cfg.target_spacing > 0.0
                             ? cfg.target_spacing
                             : stacks[static_cast<std::size_t>(t)].geometry().spacing.x();
  const Geometry grid = staged("reconstruction grid", [&] { return reconstruction_grid(stacks, t, spacing, mask); });
  const ForwardModel model(grid, stacks, cfg.psf);
  const SrOptions sr_opts{workers, cfg.deterministic, 1e-2};

  std::vector<Patch> slices = whole_slices(stacks);
  if (mask != nullptr) restrict_to_mask(slices, stacks, *mask);
  ReconState state = staged("initialization", [&] { return initialize_recon(model, slices, sr_opts); });
  state.alpha = cfg.sr.alpha;
  state.lambda = cfg.sr.lambda;

  EvaluateOptions eval;
  eval.workers = workers;
  eval.mask = mask;
  eval.region = mask != nullptr ? "mask" : "whole";
  result.baseline = staged("baseline metrics", [&] { return evaluate_reconstruction(model, state.recon, slices, eval); });

  EMConfig em_cfg = cfg.em;
  em_cfg.intensity_range = intensity_range(stacks);
  // Without a mask the statistics are restricted to the foreground.
  const double background = mask != nullptr ? -1.0 : kBackgroundFraction * em_cfg.intensity_range;
  RegistrationConfig reg_cfg = cfg.registration;
  if (reg_cfg.foreground_level < 0.0) reg_cfg.foreground_level = kForegroundFraction * em_cfg.intensity_range;
  EMState em_state;
  std::vector<Patch> patches;

  for (int it = 0; it < cfg.sr.iterations; ++it) {
    std::vector<Patch> next = staged("patch extraction", [&] { return plan_iteration(plan, it, stacks, workers); });
    if (!patches.empty()) carry_poses(next, patches);
    if (mask != nullptr) restrict_to_mask(next, stacks, *mask);
    if (next.empty()) throw EmptyInputError("patch extraction: no patches inside the mask");
    patches = std::move(next);

    const OverheadReport ov = overhead_report(patches);
    result.overhead.push_back({it, to_string(plan.shape), effective_patch_size(plan, it), ov.patch_count,
                               ov.overhead_pct});

    staged("patch registration", [&] {
      const RegistrationPyramid pyramid(state.recon, reg_cfg);
      parallel_for(patches.size(), workers, [&](std::size_t i, int) {
        Patch& p = patches[i];
        const RegistrationResult r =
            register_patch_to_volume(p, stacks[static_cast<std::size_t>(p.stack)], pyramid, reg_cfg);
        p.pose = r.pose;
        p.registrable = r.registrable;
        p.similarity = r.similarity;
      });
    });
    std::vector<RigidTransform> poses;
    poses.reserve(patches.size());
    for (const auto& p : patches) {
      result.poses.push_back({p.id, it, p.pose.params(), p.similarity});
      poses.push_back(p.pose);
    }
    result.iteration_poses.push_back(std::move(poses));

    staged("outlier rejection", [&] {
      const auto residuals = compute_residuals(model, state.recon, patches, workers, background);
      const EMResult em = em_update(residuals, em_state, em_cfg);
      apply_em(patches, em);
      // Unregistrable patches sit out this iteration's update.
      for (auto& p : patches) p.excluded = p.excluded || !p.registrable;
      em_state = em.state;
      result.em.push_back({it, std::sqrt(em.state.sigma2), em.state.mix, em.excluded});
    });

    staged("super-resolution", [&] {
      for (int step = 0; step < cfg.sr.inner_steps; ++step) sr_iteration(state, model, patches, sr_opts);
    });

    if (cfg.track_quality) {
      result.iteration_psnr.push_back(evaluate_reconstruction(model, state.recon, patches, eval).psnr);
    }
  }

  if (cfg.mode == Mode::svr) {
    for (const auto& p : patches) stacks[static_cast<std::size_t>(p.stack)].set_slice_pose(p.slice, p.pose);
  }
  result.rigidity = staged("rigidity map", [&] { return rigidity_map(model, patches, workers, cfg.deterministic); });
  eval.heat_maps = !cfg.outputs.dssim.empty();
  result.metrics = staged("evaluation", [&] { return evaluate_reconstruction(model, state.recon, patches, eval); });
  result.recon = std::move(state.recon);
  result.confidence = std::move(state.confidence);
  result.patches = std::move(patches);
  result.stacks = std::move(stacks);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

namespace {

std::vector<Stack> load_stacks(const PipelineConfig& cfg) {
  if (cfg.stack_paths.empty()) throw ParameterError("no input stacks given");
  std::vector<Stack> stacks;
  for (const auto& p : cfg.stack_paths) stacks.emplace_back(read_nifti(p));
  return stacks;
}

}  // namespace

RunResult run(const PipelineConfig& cfg) {
  std::vector<Stack> stacks = staged("loading stacks", [&] { return load_stacks(cfg); });
  std::optional<Volume> mask;
  if (!cfg.mask_path.empty()) mask = staged("loading mask", [&] { return read_nifti(cfg.mask_path); });
  return run(std::move(stacks), cfg, mask ? &*mask : nullptr);
}

void emit_outputs(const RunResult& result, const PipelineConfig& cfg) {
  const OutputPaths out = cfg.outputs.resolved();
  staged("writing outputs", [&] {
    write_nifti(out.recon, result.recon);
    write_nifti(out.confidence, result.confidence);
    write_nifti(out.rigidity, result.rigidity);

    std::vector<std::vector<std::string>> rows;
    for (const auto& m : result.metrics.slices) {
      rows.push_back({std::to_string(m.stack) + ":" + std::to_string(m.slice), m.region, format_double(m.cc),
                      format_double(m.psnr), format_double(m.ssim), format_double(m.dssim)});
    }
    write_csv(out.metrics_csv, {"slice_id", "region", "cc", "psnr", "ssim", "dssim"}, rows);

    rows.clear();
    for (const auto& o : result.overhead) {
      rows.push_back({std::to_string(o.iteration), o.shape, std::to_string(o.a), std::to_string(o.patches),
                      format_double(o.overhead_pct)});
    }
    write_csv(out.overhead_csv, {"iteration", "shape", "a", "M", "overhead_pct"}, rows);

    rows.clear();
    for (const auto& p : result.poses) {
      std::vector<std::string> r{std::to_string(p.patch_id), std::to_string(p.iteration)};
      for (double v : p.params) r.push_back(format_double(v));
      r.push_back(format_double(p.cc));
      rows.push_back(std::move(r));
    }
    write_csv(out.poses_csv, {"patch_id", "iteration", "rx", "ry", "rz", "tx", "ty", "tz", "cc"}, rows);

    rows.clear();
    for (const auto& e : result.em) {
      rows.push_back({std::to_string(e.iteration), format_double(e.sigma), format_double(e.mix),
                      std::to_string(e.excluded)});
    }
    write_csv(out.em_csv, {"iteration", "sigma", "c", "excluded"}, rows);

    if (!out.dssim.empty()) {
      for (std::size_t s = 0; s < result.metrics.dssim_maps.size(); ++s) {
        const Volume& v = result.metrics.dssim_maps[s];
        const std::string base = out.dssim.string() + "_stack" + std::to_string(s);
        write_nifti(base + ".nii", v);
        const int k = v.dims()[2] / 2;
        Image2D mid(v.dims()[0], v.dims()[1]);
        std::copy_n(v.data().begin() + static_cast<std::ptrdiff_t>(mid.data.size()) * k, mid.data.size(),
                    mid.data.begin());
        write_heat_png(base + ".png", mid, 0.0, 1.0);
      }
    }

    KeyValues kv = config_to_key_values(cfg);
    kv["result.template"] = std::to_string(result.template_index);
    kv["result.seconds"] = format_double(result.seconds);
    kv["result.patches"] = std::to_string(result.patches.size());
    kv["result.baseline_cc"] = format_double(result.baseline.cc);
    kv["result.baseline_psnr"] = format_double(result.baseline.psnr);
    kv["result.baseline_ssim"] = format_double(result.baseline.ssim);
    kv["result.baseline_dssim"] = format_double(result.baseline.dssim);
    kv["result.cc"] = format_double(result.metrics.cc);
    kv["result.psnr"] = format_double(result.metrics.psnr);
    kv["result.ssim"] = format_double(result.metrics.ssim);
    kv["result.dssim"] = format_double(result.metrics.dssim);
    for (std::size_t s = 0; s < result.stack_transforms.size(); ++s) {
      std::string v;
      for (double x : result.stack_transforms[s].params()) v += (v.empty() ? "" : ",") + format_double(x);
      kv["result.stack_transform." + std::to_string(s)] = v;
    }
    write_key_values(out.manifest, kv);
  });
}

MetricReport evaluate_existing(const PipelineConfig& cfg, const Volume& recon,
                               const std::filesystem::path& poses_csv) {
  std::vector<Stack> stacks = staged("loading stacks", [&] { return load_stacks(cfg); });
  std::optional<Volume> mask;
  if (!cfg.mask_path.empty()) mask = staged("loading mask", [&] { return read_nifti(cfg.mask_path); });
  const int t = select_template(stacks, cfg.template_index);
  intensity_match(stacks, t);

  std::map<int, RigidTransform> logged;
  if (!poses_csv.empty() && std::filesystem::exists(poses_csv)) {
    const auto rows = staged("reading pose log", [&] { return read_csv(poses_csv); });
    int last = -1;
    for (const auto& r : rows) {
      if (r.size() >= 8) last = std::max(last, std::stoi(r[1]));
    }
    for (const auto& r : rows) {
      if (r.size() < 8 || std::stoi(r[1]) != last) continue;
      logged[std::stoi(r[0])] = RigidTransform({std::stod(r[2]), std::stod(r[3]), std::stod(r[4])},
                                               {std::stod(r[5]), std::stod(r[6]), std::stod(r[7])});
    }
  } else if (cfg.register_stacks && stacks.size() > 1) {
    staged("stack registration", [&] {
      for (std::size_t s = 0; s < stacks.size(); ++s) {
        if (static_cast<int>(s) == t) continue;
        stacks[s].set_stack_pose(register_stack_to_volume(stacks[s], stacks[static_cast<std::size_t>(t)].image(),
                                                          cfg.registration));
      }
    });
  }

  PatchPlan plan = cfg.effective_plan();
  if (plan.shape == PatchShape::superpixel && plan.compactness <= 0.0) {
    const auto [lo, hi] = robust_range(stacks[static_cast<std::size_t>(t)]);
    plan.compactness = cfg.compactness_fraction * (hi > lo ? hi - lo : 1.0);
  }
  if (plan.multiscale && plan.scales.empty()) plan.scales = PatchPlan::default_scales(cfg.sr.iterations);
  std::vector<Patch> patches = plan_iteration(plan, cfg.sr.iterations - 1, stacks, cfg.workers);
  if (mask) restrict_to_mask(patches, stacks, *mask);
  for (auto& p : patches) {
    if (auto it = logged.find(p.id); it != logged.end()) p.pose = it->second;
  }
  const ForwardModel model(recon.geometry(), stacks, cfg.psf);
  EvaluateOptions eval;
  eval.workers = effective_workers(cfg.workers);
  eval.mask = mask ? &*mask : nullptr;
  eval.region = mask ? "mask" : "whole";
  return staged("evaluation", [&] { return evaluate_reconstruction(model, recon, patches, eval); });
}

}  // namespace pvr
