#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace cndm {

inline std::size_t hardware_workers() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<std::size_t>(n);
}

/// Runs body(i) for i in [0, n) on up to `workers` threads with static
/// scheduling. Callers must write to disjoint locations; any reduction is
/// done afterwards in index order so results never depend on `workers`.
/// If bodies throw, the exception from the lowest index is rethrown.
template <class Body>
void parallel_for(std::size_t n, std::size_t workers, Body&& body) {
  const auto count = static_cast<std::ptrdiff_t>(n);
  const std::size_t threads = std::max<std::size_t>(1, std::min(workers, n));
  if (threads == 1) {
    for (std::ptrdiff_t i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
    return;
  }
#if defined(_OPENMP)
  std::mutex mu;
  std::exception_ptr error;
  std::size_t error_index = std::numeric_limits<std::size_t>::max();
#pragma omp parallel for num_threads(static_cast<int>(threads)) schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (static_cast<std::size_t>(i) < error_index) {
        error_index = static_cast<std::size_t>(i);
        error = std::current_exception();
      }
    }
  }
  if (error) std::rethrow_exception(error);
#else
  for (std::ptrdiff_t i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
#endif
}

}  // namespace cndm
