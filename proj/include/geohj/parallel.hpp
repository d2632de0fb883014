#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace geohj {

/// Worker count used when a call does not pass one. Set by --jobs.
inline std::atomic<int>& default_jobs() {
  static std::atomic<int> jobs{1};
  return jobs;
}

/// Runs f(i) for i in [0, n) on up to `jobs` threads. Indices are handed out
/// dynamically; the first exception thrown by any worker is rethrown.
template <class F>
void parallel_for(std::size_t n, F&& f, int jobs = 0) {
  if (jobs <= 0) jobs = default_jobs().load();
  std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace geohj
