#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "pvr/parallel.hpp"
#include "pvr/patches.hpp"
#include "pvr/psf.hpp"
#include "pvr/stack.hpp"
#include "pvr/volume.hpp"

namespace pvr {

/// Normalized PSF weights of one acquired pixel over reconstruction voxels.
struct Footprint {
  std::vector<std::uint32_t> index;
  std::vector<double> weight;
  void clear() {
    index.clear();
    weight.clear();
  }
};

/// Maps pixels of one slice, placed by a rigid pose, onto a reconstruction grid.
class SliceProjector {
 public:
  SliceProjector(const Geometry& recon, const Stack& stack, int slice, const RigidTransform& pose,
                 const Psf& psf);

  /// Fills `out` with the footprint of pixel (x, y), weights summing to 1.
  /// Returns false (pixel unobserved) when the kernel sum over in-grid voxels
  /// is not positive.
  bool footprint(int x, int y, Footprint& out) const;

 private:
  const Psf* psf_;
  std::array<int, 3> dims_;
  Eigen::Matrix3d to_local_;       // recon index -> slice-local mm
  Eigen::Vector3d local_origin_;   // local coordinates of recon index 0 seen from pixel (0, 0)
  double spacing_x_;
  double spacing_y_;
  Eigen::Vector3d center_base_;    // recon index of pixel (0, 0)
  Eigen::Vector3d center_step_x_;  // recon index step per pixel along x
  Eigen::Vector3d center_step_y_;
  Eigen::Vector3d half_extent_;    // support half-extent in recon index units
};

/// Reconstruction grid plus one PSF per input stack.
class ForwardModel {
 public:
  ForwardModel(const Geometry& recon, const std::vector<Stack>& stacks, const PsfConfig& cfg = {});

  const Geometry& recon_geometry() const { return recon_; }
  const std::vector<Stack>& stacks() const { return *stacks_; }
  const Psf& psf(int stack) const { return psfs_[static_cast<std::size_t>(stack)]; }
  const PsfConfig& config() const { return cfg_; }

  SliceProjector projector(const Patch& patch) const {
    return SliceProjector(recon_, (*stacks_)[static_cast<std::size_t>(patch.stack)], patch.slice,
                          patch.pose, psf(patch.stack));
  }
  /// Observed intensity of the n-th dilated pixel of a patch.
  double intensity(const Patch& patch, std::size_t n) const;

 private:
  Geometry recon_;
  const std::vector<Stack>* stacks_;
  PsfConfig cfg_;
  std::vector<Psf> psfs_;
};

struct SimulatedPatch {
  std::vector<double> values;          // per dilated pixel
  std::vector<std::uint8_t> observed;  // 0 where the footprint misses the grid
};

/// s_j = sum_k w_jk X_k for every dilated pixel of the patch.
SimulatedPatch simulate_patch(const ForwardModel& model, const Volume& recon, const Patch& patch);

/// Numerator / confidence accumulation targets for scatter.
struct ScatterBuffers {
  VoxelAccumulator numerator;
  VoxelAccumulator confidence;
  ScatterBuffers(std::size_t voxels, int workers, bool deterministic)
      : numerator(voxels, workers, deterministic), confidence(voxels, workers, deterministic) {}
};

/// Adjoint of simulate_patch: adds weight_j * w_jk * value_j to the numerator
/// and weight_j * w_jk to the confidence of every voxel k in pixel j's footprint.
void scatter_patch(const ForwardModel& model, const Patch& patch, std::span<const double> values,
                   std::span<const double> weights, ScatterBuffers& buffers, int worker);

/// Evolving reconstruction.
struct ReconState {
  Volume recon;
  Volume confidence;  // accumulated weight; 0 marks unobserved voxels
  int iteration = 0;
  double alpha = 0.9;
  double lambda = 0.01;
};

struct SrOptions {
  int workers = 1;
  bool deterministic = true;
  /// Voxels whose confidence is at or below this are treated as unobserved.
  double min_confidence = 1e-2;
};

/// Weight of the n-th dilated pixel in data-term sums: p_j * pbar, or 0 for
/// excluded patches.
double pixel_weight(const Patch& patch, std::size_t n);

struct DataTerm {
  std::vector<double> numerator;   // sum_j weight_j w_jk (y_j - (W X)_j)
  // Step normalizer sum_j weight_j |w_jk| sum_m |w_jm|. It bounds the data-term
  // Hessian diagonally, and equals sum_j weight_j w_jk when all weights are >= 0.
  std::vector<double> confidence;
  double energy = 0.0;             // 1/2 sum_j weight_j (y_j - (W X)_j)^2
  double residual_norm = 0.0;      // sqrt(sum_j weight_j (y_j - (W X)_j)^2)
};

/// One fused simulate/scatter pass over all live patches. The gradient of
/// `energy` with respect to X is -numerator.
DataTerm data_term(const ForwardModel& model, const Volume& recon, std::span<const Patch> patches,
                   const SrOptions& opts);

/// Gradient of 1/2 sum |grad X|^2 (6-neighbour), i.e. the negated discrete Laplacian.
std::vector<double> laplacian_gradient(const Volume& x);

/// Replaces each voxel with confidence <= threshold by the mean of its observed
/// 26-neighbours, sweeping until no further voxel can be filled.
void fill_unobserved(Volume& x, std::span<const double> confidence, double threshold);

struct SrStepInfo {
  double residual_norm_before = 0.0;
  double energy_before = 0.0;
};

/// X <- X + alpha * numerator / confidence - alpha * lambda * L(X).
SrStepInfo sr_iteration(ReconState& state, const ForwardModel& model,
                        std::span<const Patch> patches, const SrOptions& opts);

/// Isotropic grid with the template stack's axes covering the union of all
/// stacks' posed slice corners, or the bounding box of a mask when given.
Geometry reconstruction_grid(const std::vector<Stack>& stacks, int template_index,
                             double spacing, const Volume* mask = nullptr);

/// X0: confidence-normalized scatter of every slice at its current pose with
/// uniform posteriors, then neighbour-mean fill of empty voxels. Throws
/// ParameterError for spacing <= 0 and EmptyInputError without slices.
ReconState initialize_recon(const std::vector<Stack>& stacks, int template_index, double spacing,
                            const PsfConfig& psf, const SrOptions& opts,
                            const Volume* mask = nullptr);

/// Same scatter, onto a caller-provided grid and patch set.
ReconState initialize_recon(const ForwardModel& model, std::span<const Patch> patches,
                            const SrOptions& opts);

}  // namespace pvr
