#include "pvr/manifest.hpp"

#include <fstream>
#include <sstream>

#include "pvr/error.hpp"
#include "pvr/image_io.hpp"

namespace pvr {

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  KeyValues kv;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("malformed manifest line: " + line);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

void write_key_values(const std::filesystem::path& path, const KeyValues& kv) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  for (const auto& [k, v] : kv) f << k << '=' << v << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

namespace {

std::string join(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : ",") + format_double(x);
  return s;
}

std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

}  // namespace

KeyValues config_to_key_values(const PipelineConfig& cfg) {
  KeyValues kv;
  std::string stacks;
  for (const auto& p : cfg.stack_paths) stacks += (stacks.empty() ? "" : ";") + p.string();
  kv["stacks"] = stacks;
  kv["mode"] = to_string(cfg.mode);
  kv["patch_shape"] = to_string(cfg.patches.shape);
  kv["patch_size"] = std::to_string(cfg.patches.size);
  kv["stride"] = std::to_string(cfg.patches.stride);
  kv["dilation"] = cfg.patches.dilation.str();
  kv["compactness"] = format_double(cfg.patches.compactness);
  kv["compactness_fraction"] = format_double(cfg.compactness_fraction);
  kv["schedule"] = cfg.patches.multiscale ? "multiscale" : "fixed";
  kv["scales"] = join(cfg.patches.scales);
  kv["reg_levels"] = join(cfg.registration.blur_sigmas);
  kv["reg_iters"] = std::to_string(cfg.registration.max_iterations);
  kv["rot_step"] = format_double(cfg.registration.rotation_step);
  kv["trans_step"] = format_double(cfg.registration.translation_step);
  kv["reg_halvings"] = std::to_string(cfg.registration.halvings);
  kv["reg_epsilon"] = format_double(cfg.registration.epsilon);
  kv["reg_min_pixels"] = std::to_string(cfg.registration.min_pixels);
  kv["reg_coarse_stride"] = std::to_string(cfg.registration.coarse_stride);
  kv["reg_foreground_level"] = format_double(cfg.registration.foreground_level);
  kv["reg_min_foreground"] = format_double(cfg.registration.min_foreground);
  kv["iterations"] = std::to_string(cfg.sr.iterations);
  kv["sr_steps"] = std::to_string(cfg.sr.inner_steps);
  kv["alpha"] = format_double(cfg.sr.alpha);
  kv["lambda"] = format_double(cfg.sr.lambda);
  kv["em_rounds"] = std::to_string(cfg.em.max_rounds);
  kv["em_tolerance"] = format_double(cfg.em.tolerance);
  kv["em_threshold"] = format_double(cfg.em.threshold);
  kv["em_sigma_floor"] = format_double(cfg.em.sigma_floor_fraction);
  kv["em_initial_mix"] = format_double(cfg.em.initial_mix);
  kv["psf_support"] = format_double(cfg.psf.support);
  kv["psf_epsilon"] = format_double(cfg.psf.epsilon);
  kv["template"] = cfg.template_index < 0 ? "auto" : std::to_string(cfg.template_index);
  kv["mask"] = cfg.mask_path.string();
  kv["target_spacing"] = format_double(cfg.target_spacing);
  kv["seed"] = std::to_string(cfg.seed);
  kv["workers"] = std::to_string(cfg.workers);
  kv["deterministic"] = cfg.deterministic ? "1" : "0";
  kv["register_stacks"] = cfg.register_stacks ? "1" : "0";
  kv["out"] = cfg.outputs.recon.string();
  kv["confidence_out"] = cfg.outputs.confidence.string();
  kv["rigidity_out"] = cfg.outputs.rigidity.string();
  kv["metrics_csv"] = cfg.outputs.metrics_csv.string();
  kv["overhead_csv"] = cfg.outputs.overhead_csv.string();
  kv["poses_csv"] = cfg.outputs.poses_csv.string();
  kv["em_csv"] = cfg.outputs.em_csv.string();
  kv["dssim_out"] = cfg.outputs.dssim.string();
  kv["version"] = "1.0.0";
  return kv;
}

PipelineConfig config_from_key_values(const KeyValues& kv) {
  PipelineConfig cfg;
  auto get = [&](const char* key) -> const std::string* {
    const auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  try {
    if (auto v = get("stacks")) {
      std::stringstream ss(*v);
      std::string item;
      while (std::getline(ss, item, ';')) {
        if (!item.empty()) cfg.stack_paths.emplace_back(item);
      }
    }
    if (auto v = get("mode")) cfg.mode = parse_mode(*v);
    if (auto v = get("patch_shape")) cfg.patches.shape = parse_patch_shape(*v);
    if (auto v = get("patch_size")) cfg.patches.size = std::stoi(*v);
    if (auto v = get("stride")) cfg.patches.stride = std::stoi(*v);
    if (auto v = get("dilation")) cfg.patches.dilation = Dilation::parse(*v);
    if (auto v = get("compactness")) cfg.patches.compactness = std::stod(*v);
    if (auto v = get("compactness_fraction")) cfg.compactness_fraction = std::stod(*v);
    if (auto v = get("schedule")) cfg.patches.multiscale = *v == "multiscale";
    if (auto v = get("scales")) cfg.patches.scales = split_doubles(*v);
    if (auto v = get("reg_levels")) cfg.registration.blur_sigmas = split_doubles(*v);
    if (auto v = get("reg_iters")) cfg.registration.max_iterations = std::stoi(*v);
    if (auto v = get("rot_step")) cfg.registration.rotation_step = std::stod(*v);
    if (auto v = get("trans_step")) cfg.registration.translation_step = std::stod(*v);
    if (auto v = get("reg_halvings")) cfg.registration.halvings = std::stoi(*v);
    if (auto v = get("reg_epsilon")) cfg.registration.epsilon = std::stod(*v);
    if (auto v = get("reg_min_pixels")) cfg.registration.min_pixels = std::stoi(*v);
    if (auto v = get("reg_coarse_stride")) cfg.registration.coarse_stride = std::stoi(*v);
    if (auto v = get("reg_foreground_level")) cfg.registration.foreground_level = std::stod(*v);
    if (auto v = get("reg_min_foreground")) cfg.registration.min_foreground = std::stod(*v);
    if (auto v = get("iterations")) cfg.sr.iterations = std::stoi(*v);
    if (auto v = get("sr_steps")) cfg.sr.inner_steps = std::stoi(*v);
    if (auto v = get("alpha")) cfg.sr.alpha = std::stod(*v);
    if (auto v = get("lambda")) cfg.sr.lambda = std::stod(*v);
    if (auto v = get("em_rounds")) cfg.em.max_rounds = std::stoi(*v);
    if (auto v = get("em_tolerance")) cfg.em.tolerance = std::stod(*v);
    if (auto v = get("em_threshold")) cfg.em.threshold = std::stod(*v);
    if (auto v = get("em_sigma_floor")) cfg.em.sigma_floor_fraction = std::stod(*v);
    if (auto v = get("em_initial_mix")) cfg.em.initial_mix = std::stod(*v);
    if (auto v = get("psf_support")) cfg.psf.support = std::stod(*v);
    if (auto v = get("psf_epsilon")) cfg.psf.epsilon = std::stod(*v);
    if (auto v = get("template")) cfg.template_index = *v == "auto" ? -1 : std::stoi(*v);
    if (auto v = get("mask")) cfg.mask_path = *v;
    if (auto v = get("target_spacing")) cfg.target_spacing = std::stod(*v);
    if (auto v = get("seed")) cfg.seed = static_cast<unsigned>(std::stoul(*v));
    if (auto v = get("workers")) cfg.workers = std::stoi(*v);
    if (auto v = get("deterministic")) cfg.deterministic = *v == "1";
    if (auto v = get("register_stacks")) cfg.register_stacks = *v == "1";
    if (auto v = get("out")) cfg.outputs.recon = *v;
    if (auto v = get("confidence_out")) cfg.outputs.confidence = *v;
    if (auto v = get("rigidity_out")) cfg.outputs.rigidity = *v;
    if (auto v = get("metrics_csv")) cfg.outputs.metrics_csv = *v;
    if (auto v = get("overhead_csv")) cfg.outputs.overhead_csv = *v;
    if (auto v = get("poses_csv")) cfg.outputs.poses_csv = *v;
    if (auto v = get("em_csv")) cfg.outputs.em_csv = *v;
    if (auto v = get("dssim_out")) cfg.outputs.dssim = *v;
  } catch (const std::invalid_argument& e) {
    throw ParameterError(std::string("malformed manifest value: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw ParameterError(std::string("manifest value out of range: ") + e.what());
  }
  return cfg;
}

}  // namespace pvr
