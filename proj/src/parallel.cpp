#include "pvr/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace pvr {

int effective_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t, int)>& fn) {
  workers = std::max(1, workers);
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i, 0);
    return;
  }
  const auto used = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), n));
  const std::size_t chunk = std::max<std::size_t>(1, n / (static_cast<std::size_t>(used) * 8));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto body = [&](int worker) {
    try {
      for (;;) {
        const std::size_t begin = next.fetch_add(chunk);
        if (begin >= n) return;
        const std::size_t end = std::min(n, begin + chunk);
        for (std::size_t i = begin; i < end; ++i) fn(i, worker);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!error) error = std::current_exception();
      next.store(n);
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(used - 1));
  for (int w = 1; w < used; ++w) threads.emplace_back(body, w);
  body(0);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

VoxelAccumulator::VoxelAccumulator(std::size_t size, int workers, bool deterministic)
    : size_(size), deterministic_(deterministic) {
  const auto w = static_cast<std::size_t>(std::max(1, workers));
  if (deterministic_) {
    fixed_.assign(w, std::vector<std::int64_t>(size, 0));
  } else {
    floating_.assign(w, std::vector<double>(size, 0.0));
  }
}

std::vector<double> VoxelAccumulator::reduce() const {
  std::vector<double> out(size_, 0.0);
  if (deterministic_) {
    std::vector<std::int64_t> total(size_, 0);
    for (const auto& buf : fixed_) {
      for (std::size_t i = 0; i < size_; ++i) total[i] += buf[i];
    }
    for (std::size_t i = 0; i < size_; ++i) out[i] = static_cast<double>(total[i]) / kScale;
  } else {
    for (const auto& buf : floating_) {
      for (std::size_t i = 0; i < size_; ++i) out[i] += buf[i];
    }
  }
  return out;
}

}  // namespace pvr
