#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

namespace pvr {

/// Runs fn(item, worker) for every item in [0, n) on up to `workers` threads.
/// Items are handed out dynamically, so fn must not depend on which worker
/// processes which item except through per-worker scratch.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t, int)>& fn);

/// Number of workers actually used for a request (clamped to >= 1).
int effective_workers(int requested);

/// Per-voxel additive accumulator shared by concurrent workers.
///
/// In deterministic mode every worker owns a fixed-point (2^-32) integer
/// buffer. Integer addition is associative, so the reduced result is
/// bit-identical for any worker count and any scheduling. Otherwise each
/// worker owns a double buffer and the sum depends on scheduling.
class VoxelAccumulator {
 public:
  VoxelAccumulator(std::size_t size, int workers, bool deterministic);

  void add(int worker, std::size_t index, double value) {
    if (deterministic_) {
      fixed_[static_cast<std::size_t>(worker)][index] += to_fixed(value);
    } else {
      floating_[static_cast<std::size_t>(worker)][index] += value;
    }
  }

  std::size_t size() const { return size_; }
  std::vector<double> reduce() const;

  static std::int64_t to_fixed(double v) {
    return static_cast<std::int64_t>(v * kScale + (v >= 0 ? 0.5 : -0.5));
  }
  static constexpr double kScale = 4294967296.0;

 private:
  std::size_t size_;
  bool deterministic_;
  std::vector<std::vector<std::int64_t>> fixed_;
  std::vector<std::vector<double>> floating_;
};

}  // namespace pvr
