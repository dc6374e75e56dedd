#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pvr/metrics.hpp"
#include "pvr/patches.hpp"
#include "pvr/psf.hpp"
#include "pvr/registration.hpp"
#include "pvr/robust.hpp"
#include "pvr/stack.hpp"
#include "pvr/superres.hpp"

namespace pvr {

enum class Mode { svr, pvr };
const char* to_string(Mode m);
Mode parse_mode(const std::string& s);

struct SrParams {
  int iterations = 3;   // outer register / EM / SR rounds
  int inner_steps = 7;  // SR steps per round
  double alpha = 0.9;
  double lambda = 0.01;
};

struct OutputPaths {
  std::filesystem::path recon = "recon.nii";
  std::filesystem::path confidence;  // defaults derived from recon
  std::filesystem::path rigidity;
  std::filesystem::path metrics_csv;
  std::filesystem::path overhead_csv;
  std::filesystem::path poses_csv;
  std::filesystem::path em_csv;
  std::filesystem::path manifest;
  std::filesystem::path dssim;  // optional heat maps, prefix

  /// Fills empty entries with names next to the reconstruction.
  OutputPaths resolved() const;
};

struct PipelineConfig {
  std::vector<std::filesystem::path> stack_paths;
  Mode mode = Mode::pvr;
  /// Compactness <= 0 selects compactness_fraction of the template range.
  PatchPlan patches{PatchShape::square, 32, 16, {}, 0.0, false, {}};
  RegistrationConfig registration;
  SrParams sr;
  EMConfig em;
  PsfConfig psf;
  /// -1 selects the stack with the least motion.
  int template_index = -1;
  std::filesystem::path mask_path;
  /// Reconstruction voxel size; <= 0 uses the template's in-plane spacing.
  double target_spacing = 0.0;
  /// Superpixel compactness as a fraction of the template's robust intensity
  /// range, used when patches.compactness <= 0.
  double compactness_fraction = 0.1;
  unsigned seed = 17;
  int workers = 1;
  bool deterministic = false;
  bool register_stacks = true;
  /// Evaluate after every outer iteration (costs one simulation pass each).
  bool track_quality = false;
  bool metrics_only = false;
  OutputPaths outputs;

  /// Throws ParameterError. In svr mode the patch plan is forced to whole slices.
  void validate() const;
  /// Patch plan actually used (whole slices in svr mode).
  PatchPlan effective_plan() const;
};

/// Mean normalized cross correlation between adjacent slices.
double adjacent_slice_score(const Stack& stack);

/// Index of the stack with the highest adjacent-slice score (ties: lowest
/// index), or `policy` itself when it is >= 0. Throws ParameterError for an
/// out-of-range index or no stacks.
int select_template(const std::vector<Stack>& stacks, int policy = -1);

/// Linear interpolation percentile, q in [0, 100].
double percentile(std::vector<double> values, double q);

struct IntensityMap {
  double scale = 1.0;
  double offset = 0.0;
};

/// Linear map sending the stack's 1st-99th percentile range onto the
/// template's. Throws ParameterError for a constant stack.
IntensityMap intensity_mapping(const Stack& stack, const Stack& reference);

/// Rescales every stack onto the template's robust range in place.
std::vector<IntensityMap> intensity_match(std::vector<Stack>& stacks, int template_index);

struct PoseRecord {
  int patch_id = 0;
  int iteration = 0;
  RigidParams params{};
  double cc = 0.0;
};

struct EmRecord {
  int iteration = 0;
  double sigma = 0.0;
  double mix = 0.0;
  int excluded = 0;
};

struct OverheadRecord {
  int iteration = 0;
  std::string shape;
  int a = 0;
  std::size_t patches = 0;
  double overhead_pct = 0.0;
};

struct RunResult {
  Volume recon;
  Volume confidence;
  Volume rigidity;
  MetricReport metrics;
  MetricReport baseline;
  std::vector<Stack> stacks;  // intensity-matched, with final slice poses
  std::vector<Patch> patches;  // final iteration
  int template_index = 0;
  std::vector<IntensityMap> intensity_maps;
  std::vector<RigidTransform> stack_transforms;
  std::vector<PoseRecord> poses;
  std::vector<EmRecord> em;
  std::vector<OverheadRecord> overhead;
  /// Per outer iteration mean PSNR (track_quality only).
  std::vector<double> iteration_psnr;
  /// Per outer iteration pose of every patch, indexed like `patches` of that iteration.
  std::vector<std::vector<RigidTransform>> iteration_poses;
  double seconds = 0.0;
};

/// Full reconstruction on in-memory stacks.
RunResult run(std::vector<Stack> stacks, const PipelineConfig& cfg, const Volume* mask = nullptr);

/// Loads cfg.stack_paths (and the mask) and runs. Errors are rethrown with
/// the stage name prefixed.
RunResult run(const PipelineConfig& cfg);

/// Writes reconstruction, confidence and rigidity volumes, the metric,
/// overhead, pose and EM CSVs and the manifest.
void emit_outputs(const RunResult& result, const PipelineConfig& cfg);

/// Re-evaluates an existing reconstruction: rebuilds the final patch set and
/// restores poses from the pose log when present.
MetricReport evaluate_existing(const PipelineConfig& cfg, const Volume& recon,
                               const std::filesystem::path& poses_csv);

}  // namespace pvr
