#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace quadvar {

namespace detail {
inline std::atomic<unsigned>& thread_setting() {
  static std::atomic<unsigned> threads{0};
  return threads;
}
}  // namespace detail

/// Worker count used by parallel loops; 0 selects hardware concurrency.
inline void set_thread_count(unsigned threads) { detail::thread_setting() = threads; }

inline unsigned thread_count() {
  const unsigned configured = detail::thread_setting();
  if (configured != 0) return configured;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls body(i) for i in [0, n).  Each index is visited exactly once; callers
/// write results into per-index slots so the outcome never depends on the
/// schedule.  The first exception thrown by any worker is rethrown.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  const std::size_t workers = std::min<std::size_t>(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    try {
      for (std::size_t i = next++; i < n; i = next++) body(i);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = n;
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace quadvar
