#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pairfield {

/// Worker count for parallel maps. Defaults to 1; PAIRFIELD_WORKERS or the
/// CLI --workers flag overrides. Results never depend on this value: tasks
/// write into preallocated slots and reductions run in index order.
inline int& worker_count() {
  static int workers = [] {
    if (const char* env = std::getenv("PAIRFIELD_WORKERS")) {
      const int w = std::atoi(env);
      if (w >= 1) return w;
    }
    return 1;
  }();
  return workers;
}

inline void set_worker_count(int w) {
  if (w >= 1) worker_count() = w;
}

/// Runs fn(i) for i in [0, count) on the configured number of workers.
/// Tasks are claimed through an atomic counter; fn must only write to
/// per-index state. The first exception is rethrown on the caller.
template <typename Fn>
void parallel_for(int count, const Fn& fn) {
  const int workers = std::min(worker_count(), count > 0 ? count : 1);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace pairfield
