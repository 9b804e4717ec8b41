#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace hamopt {

enum class ExecutionPolicy { Serial, Parallel };

// Threads used by ExecutionPolicy::Parallel: HAMOPT_THREADS if set, otherwise
// the OpenMP default; 1 when deterministic mode is on or OpenMP is absent.
int thread_count();
void set_deterministic(bool on);
bool deterministic();

// Per-sample work: fill `terms` and `gradient` (both zeroed on entry).
using SampleKernel = std::function<void(std::size_t index, std::span<double> terms, std::span<double> gradient)>;

struct BatchSums {
  std::vector<double> terms;
  std::vector<double> gradient;
};

// Sums kernel outputs over [0, count). Both policies add per-sample results in
// index order, so they agree bit for bit. Serial is the reference
// implementation; Parallel evaluates samples concurrently into private buffers.
BatchSums reduce_batch(std::size_t count, std::size_t term_count, std::size_t gradient_size,
                       const SampleKernel& kernel, ExecutionPolicy policy = ExecutionPolicy::Parallel);

// Applies fn to every index in [0, count); fn must only write index-owned state.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn,
                  ExecutionPolicy policy = ExecutionPolicy::Parallel);

}  // namespace hamopt
