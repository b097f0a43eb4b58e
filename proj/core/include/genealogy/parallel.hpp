#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace genealogy {

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("GENEALOGY_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? int(hw) : 1;
}

// Runs fn(r) for r in [0, n).  Each replicate derives its own rng stream from
// its index, so the schedule cannot affect results; callers write to
// per-replicate slots.
template <class Fn>
void parallel_for_replicates(long long n, int threads, Fn&& fn) {
  int T = resolve_threads(threads);
  if (T <= 1 || n <= 1) {
    for (long long r = 0; r < n; ++r) fn(r);
    return;
  }
  std::atomic<long long> next{0};
  std::vector<std::thread> pool;
  pool.reserve(T);
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::mutex err_mu;
  for (int t = 0; t < T; ++t)
    pool.emplace_back([&] {
      for (;;) {
        long long r = next.fetch_add(1);
        if (r >= n || failed.load(std::memory_order_relaxed)) return;
        try {
          fn(r);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (!error) error = std::current_exception();
          failed.store(true);
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace genealogy
