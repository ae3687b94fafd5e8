#pragma once

#include <algorithm>
#include <cstdlib>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace odmn {

/// Worker count from ODMN_NUM_THREADS, default 1.
inline std::size_t thread_count() {
  const char *env = std::getenv("ODMN_NUM_THREADS");
  if (env == nullptr) return 1;
  const long n = std::strtol(env, nullptr, 10);
  return n > 0 ? std::size_t(n) : 1;
}

/// Runs fn(i) for i in [0, n) over contiguous chunks. Results must be
/// written to per-index slots so the outcome does not depend on the worker
/// count. The first exception thrown by any worker is rethrown.
template <typename Fn> void parallel_for(std::size_t n, Fn &&fn) {
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t first = n * w / workers;
    const std::size_t last = n * (w + 1) / workers;
    pool.emplace_back([&, first, last] {
      try {
        for (std::size_t i = first; i < last; ++i) fn(i);
      } catch (...) {
        const std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto &t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

} // namespace odmn
