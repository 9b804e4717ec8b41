#include "hamopt/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>

#ifdef HAMOPT_HAVE_OPENMP
#include <omp.h>
#endif

namespace hamopt {

namespace {

std::atomic<bool> g_deterministic{false};

// Runs fn over indices, rethrowing the first exception (lowest index) after the loop.
void run_indices(std::size_t count, const std::function<void(std::size_t)>& fn, ExecutionPolicy policy) {
  if (policy == ExecutionPolicy::Serial || thread_count() <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
#ifdef HAMOPT_HAVE_OPENMP
  std::vector<std::exception_ptr> errors(count);
  const long long n = static_cast<long long>(count);
#pragma omp parallel for schedule(dynamic) num_threads(thread_count())
  for (long long i = 0; i < n; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
#else
  for (std::size_t i = 0; i < count; ++i) fn(i);
#endif
}

}  // namespace

void set_deterministic(bool on) { g_deterministic = on; }
bool deterministic() { return g_deterministic; }

int thread_count() {
  if (g_deterministic) return 1;
#ifdef HAMOPT_HAVE_OPENMP
  if (const char* env = std::getenv("HAMOPT_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return omp_get_max_threads();
#else
  return 1;
#endif
}

BatchSums reduce_batch(std::size_t count, std::size_t term_count, std::size_t gradient_size,
                       const SampleKernel& kernel, ExecutionPolicy policy) {
  BatchSums sums{std::vector<double>(term_count, 0.0), std::vector<double>(gradient_size, 0.0)};
  if (policy == ExecutionPolicy::Serial) {
    std::vector<double> terms(term_count), grad(gradient_size);
    for (std::size_t i = 0; i < count; ++i) {
      std::fill(terms.begin(), terms.end(), 0.0);
      std::fill(grad.begin(), grad.end(), 0.0);
      kernel(i, terms, grad);
      for (std::size_t k = 0; k < term_count; ++k) sums.terms[k] += terms[k];
      for (std::size_t k = 0; k < gradient_size; ++k) sums.gradient[k] += grad[k];
    }
    return sums;
  }
  std::vector<double> terms(count * term_count, 0.0);
  std::vector<double> grads(count * gradient_size, 0.0);
  run_indices(
      count,
      [&](std::size_t i) {
        kernel(i, std::span<double>(terms.data() + i * term_count, term_count),
               std::span<double>(grads.data() + i * gradient_size, gradient_size));
      },
      policy);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t k = 0; k < term_count; ++k) sums.terms[k] += terms[i * term_count + k];
    for (std::size_t k = 0; k < gradient_size; ++k) sums.gradient[k] += grads[i * gradient_size + k];
  }
  return sums;
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn, ExecutionPolicy policy) {
  run_indices(count, fn, policy);
}

}  // namespace hamopt
