// pvr: patch-to-volume reconstruction command line.
#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pvr/error.hpp"
#include "pvr/image_io.hpp"
#include "pvr/manifest.hpp"
#include "pvr/nifti.hpp"
#include "pvr/phantom.hpp"
#include "pvr/pipeline.hpp"

namespace {

struct ConfigFlags {
  std::vector<std::string> stacks;
  std::string mode = "pvr";
  std::string shape = "square";
  std::string dilation = "0";
  std::string schedule = "fixed";
  std::string scales;
  std::string reg_levels;
  std::string template_policy = "auto";
  std::string mask;
  std::string manifest_in;
};

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

void add_config_options(CLI::App* app, pvr::PipelineConfig& cfg, ConfigFlags& f) {
  app->add_option("--stacks", f.stacks, "Input stacks (NIfTI)");
  app->add_option("--mode", f.mode, "svr or pvr")->capture_default_str();
  app->add_option("--patch-shape", f.shape, "square or superpixel")->capture_default_str();
  app->add_option("--patch-size", cfg.patches.size, "Patch size / superpixel step a (px)")->capture_default_str();
  app->add_option("--stride", cfg.patches.stride, "Square patch stride (px)")->capture_default_str();
  app->add_option("--compactness", cfg.patches.compactness,
                  "Superpixel compactness in intensity units (<= 0: fraction of the template range)");
  app->add_option("--compactness-fraction", cfg.compactness_fraction)->capture_default_str();
  app->add_option("--dilation", f.dilation, "Dilation in px, or percent of a (e.g. 60%)")->capture_default_str();
  app->add_option("--schedule", f.schedule, "fixed or multiscale")->capture_default_str();
  app->add_option("--scales", f.scales, "Comma-separated scale per iteration");
  app->add_option("--iterations", cfg.sr.iterations, "Outer iterations")->capture_default_str();
  app->add_option("--sr-steps", cfg.sr.inner_steps, "SR steps per iteration")->capture_default_str();
  app->add_option("--alpha", cfg.sr.alpha)->capture_default_str();
  app->add_option("--lambda", cfg.sr.lambda)->capture_default_str();
  app->add_option("--reg-levels", f.reg_levels, "Comma-separated blur sigmas (voxels), coarse to fine");
  app->add_option("--reg-iters", cfg.registration.max_iterations)->capture_default_str();
  app->add_option("--rot-step", cfg.registration.rotation_step, "Initial rotation step (deg)")->capture_default_str();
  app->add_option("--trans-step", cfg.registration.translation_step, "Initial translation step (mm)")
      ->capture_default_str();
  app->add_option("--pbar-threshold,--em-threshold", cfg.em.threshold, "Patch score exclusion threshold")
      ->capture_default_str();
  app->add_option("--em-rounds", cfg.em.max_rounds, "EM rounds per iteration")->capture_default_str();
  app->add_option("--reg-min-foreground", cfg.registration.min_foreground,
                  "Tissue fraction a patch needs to be re-registered")
      ->capture_default_str();
  app->add_option("--template", f.template_policy, "auto or stack index")->capture_default_str();
  app->add_option("--mask", f.mask, "Binary mask (NIfTI)");
  app->add_option("--spacing", cfg.target_spacing, "Reconstruction voxel size (mm)");
  app->add_option("--seed", cfg.seed)->capture_default_str();
  app->add_option("--workers", cfg.workers)->capture_default_str();
  app->add_flag("--deterministic", cfg.deterministic, "Bit-reproducible accumulation");
  app->add_flag("!--no-stack-registration", cfg.register_stacks, "Skip global stack alignment");
  app->add_option("--manifest", f.manifest_in, "Load the configuration from a manifest");
}

void finish_config(pvr::PipelineConfig& cfg, const ConfigFlags& f) {
  if (!f.manifest_in.empty()) {
    pvr::PipelineConfig loaded = pvr::config_from_key_values(pvr::read_key_values(f.manifest_in));
    loaded.workers = cfg.workers;
    cfg = loaded;
    return;
  }
  for (const auto& s : f.stacks) cfg.stack_paths.emplace_back(s);
  cfg.mode = pvr::parse_mode(f.mode);
  cfg.patches.shape = pvr::parse_patch_shape(f.shape);
  cfg.patches.dilation = pvr::Dilation::parse(f.dilation);
  if (f.schedule == "multiscale") {
    cfg.patches.multiscale = true;
  } else if (f.schedule != "fixed") {
    throw pvr::ParameterError("schedule must be fixed or multiscale");
  }
  if (!f.scales.empty()) cfg.patches.scales = parse_list(f.scales);
  if (!f.reg_levels.empty()) cfg.registration.blur_sigmas = parse_list(f.reg_levels);
  cfg.template_index = f.template_policy == "auto" ? -1 : std::stoi(f.template_policy);
  cfg.mask_path = f.mask;
}

int run_guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const pvr::RegistrationFailure& e) {
    std::cerr << "registration failure: " << e.what() << '\n';
    return 2;
  } catch (const pvr::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patch-to-volume reconstruction of motion-corrupted slice stacks"};
  app.require_subcommand(1);

  // reconstruct
  pvr::PipelineConfig rcfg;
  ConfigFlags rflags;
  std::string out_override;
  bool metrics_only = false;
  auto* rec = app.add_subcommand("reconstruct", "Reconstruct a volume from stacks");
  add_config_options(rec, rcfg, rflags);
  rec->add_option("--out", out_override, "Reconstruction output path");
  std::string rig_out, conf_out, metrics_csv, overhead_csv, poses_csv, em_csv, manifest_out, dssim_out;
  rec->add_option("--rigidity-out", rig_out);
  rec->add_option("--confidence-out", conf_out);
  rec->add_option("--metrics-csv", metrics_csv);
  rec->add_option("--overhead-csv", overhead_csv);
  rec->add_option("--poses-csv", poses_csv);
  rec->add_option("--em-csv", em_csv);
  rec->add_option("--manifest-out", manifest_out);
  rec->add_option("--dssim-out", dssim_out, "Prefix for DSSIM heat maps");
  rec->add_flag("--metrics-only", metrics_only, "Evaluate the existing reconstruction at --out");

  // phantom
  std::string kind = "geometric", input, out_dir = ".";
  int size = 96;
  double spacing = 1.0, theta = 0.0, noise = 0.0;
  int interleave = 1;
  unsigned seed = 17;
  std::vector<std::string> orientations{"axial", "coronal", "sagittal"};
  std::vector<double> stack_spacing{1.25, 1.25, 2.5};
  auto* ph = app.add_subcommand("phantom", "Generate a phantom and skew-corrupted stacks");
  ph->add_option("--kind", kind, "geometric or loaded")->capture_default_str();
  ph->add_option("--input", input, "Ground-truth NIfTI for --kind loaded");
  ph->add_option("--size", size)->capture_default_str();
  ph->add_option("--spacing", spacing)->capture_default_str();
  ph->add_option("--theta", theta, "Skew angle (deg)")->capture_default_str();
  ph->add_option("--interleave", interleave, "Skewed/clean alternation period (slices)")->capture_default_str();
  ph->add_option("--orientations", orientations)->delimiter(',')->capture_default_str();
  ph->add_option("--stack-spacing", stack_spacing)->expected(3)->delimiter(',')->capture_default_str();
  ph->add_option("--noise", noise, "Gaussian noise sigma")->capture_default_str();
  ph->add_option("--seed", seed)->capture_default_str();
  ph->add_option("--out-dir", out_dir)->capture_default_str();

  // evaluate
  pvr::PipelineConfig ecfg;
  ConfigFlags eflags;
  std::string recon_path, eval_poses, eval_csv = "metrics.csv";
  auto* ev = app.add_subcommand("evaluate", "Compare original slices with simulations from a reconstruction");
  add_config_options(ev, ecfg, eflags);
  ev->add_option("--recon", recon_path, "Reconstruction (NIfTI)")->required();
  ev->add_option("--poses", eval_poses, "Pose log from a reconstruct run");
  ev->add_option("--metrics-csv", eval_csv)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (*rec) {
    return run_guarded([&] {
      finish_config(rcfg, rflags);
      auto& o = rcfg.outputs;
      if (!out_override.empty()) o.recon = out_override;
      if (!rig_out.empty()) o.rigidity = rig_out;
      if (!conf_out.empty()) o.confidence = conf_out;
      if (!metrics_csv.empty()) o.metrics_csv = metrics_csv;
      if (!overhead_csv.empty()) o.overhead_csv = overhead_csv;
      if (!poses_csv.empty()) o.poses_csv = poses_csv;
      if (!em_csv.empty()) o.em_csv = em_csv;
      if (!manifest_out.empty()) o.manifest = manifest_out;
      if (!dssim_out.empty()) o.dssim = dssim_out;
      const pvr::OutputPaths paths = o.resolved();
      if (metrics_only) {
        const pvr::Volume recon = pvr::read_nifti(paths.recon);
        const pvr::MetricReport m = pvr::evaluate_existing(rcfg, recon, paths.poses_csv);
        std::vector<std::vector<std::string>> rows;
        for (const auto& s : m.slices) {
          rows.push_back({std::to_string(s.stack) + ":" + std::to_string(s.slice), s.region,
                          pvr::format_double(s.cc), pvr::format_double(s.psnr), pvr::format_double(s.ssim),
                          pvr::format_double(s.dssim)});
        }
        pvr::write_csv(paths.metrics_csv, {"slice_id", "region", "cc", "psnr", "ssim", "dssim"}, rows);
        std::cout << "cc=" << m.cc << " psnr=" << m.psnr << " ssim=" << m.ssim << " dssim=" << m.dssim << '\n';
        return;
      }
      const pvr::RunResult r = pvr::run(rcfg);
      pvr::emit_outputs(r, rcfg);
      std::cout << "template=" << r.template_index << " patches=" << r.patches.size()
                << " baseline_psnr=" << r.baseline.psnr << " psnr=" << r.metrics.psnr
                << " ssim=" << r.metrics.ssim << " seconds=" << r.seconds << '\n';
    });
  }

  if (*ph) {
    return run_guarded([&] {
      pvr::PhantomSpec spec;
      if (kind == "loaded") {
        spec.kind = pvr::PhantomKind::loaded;
        spec.path = input;
      } else if (kind != "geometric") {
        throw pvr::ParameterError("phantom kind must be geometric or loaded");
      }
      spec.size = size;
      spec.spacing = spacing;
      const pvr::Volume gt = pvr::make_phantom(spec);
      std::filesystem::create_directories(out_dir);
      const std::filesystem::path dir(out_dir);
      pvr::write_nifti(dir / "ground_truth.nii", gt);
      const Eigen::Vector3d sp(stack_spacing[0], stack_spacing[1], stack_spacing[2]);
      pvr::KeyValues kv{{"kind", kind},
                        {"input", input},
                        {"size", std::to_string(size)},
                        {"spacing", pvr::format_double(spacing)},
                        {"theta", pvr::format_double(theta)},
                        {"interleave", std::to_string(interleave)},
                        {"noise", pvr::format_double(noise)},
                        {"seed", std::to_string(seed)},
                        {"stack_spacing", pvr::format_double(sp.x()) + "," + pvr::format_double(sp.y()) + "," +
                                              pvr::format_double(sp.z())}};
      std::string names;
      for (std::size_t i = 0; i < orientations.size(); ++i) {
        pvr::SkewParams p;
        p.theta_deg = theta;
        p.interleave_period = interleave;
        p.signs = pvr::default_sign_pattern(static_cast<int>(i));
        const pvr::Orientation o = pvr::parse_orientation(orientations[i]);
        pvr::Stack s = pvr::corrupt_stack(gt, p, o, sp);
        pvr::add_noise(s, noise, seed + static_cast<unsigned>(i));
        const std::string name = std::string("stack_") + pvr::to_string(o) + ".nii";
        pvr::write_nifti(dir / name, s.image());
        names += (names.empty() ? "" : ";") + name;
        std::string signs;
        for (int v : p.signs) signs += (signs.empty() ? "" : ",") + std::to_string(v);
        kv["signs." + std::to_string(i)] = signs;
      }
      kv["stacks"] = names;
      pvr::write_key_values(dir / "manifest.txt", kv);
      std::cout << "wrote " << orientations.size() << " stacks to " << dir.string() << '\n';
    });
  }

  if (*ev) {
    return run_guarded([&] {
      finish_config(ecfg, eflags);
      const pvr::Volume recon = pvr::read_nifti(recon_path);
      const pvr::MetricReport m = pvr::evaluate_existing(ecfg, recon, eval_poses);
      std::vector<std::vector<std::string>> rows;
      for (const auto& s : m.slices) {
        rows.push_back({std::to_string(s.stack) + ":" + std::to_string(s.slice), s.region,
                        pvr::format_double(s.cc), pvr::format_double(s.psnr), pvr::format_double(s.ssim),
                        pvr::format_double(s.dssim)});
      }
      pvr::write_csv(eval_csv, {"slice_id", "region", "cc", "psnr", "ssim", "dssim"}, rows);
      std::cout << "cc=" << m.cc << " psnr=" << m.psnr << " ssim=" << m.ssim << " dssim=" << m.dssim << '\n';
    });
  }
  return 1;
}
