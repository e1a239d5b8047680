#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace ct {

// Static-partition parallel loop over [0, n). Work items must write to
// disjoint outputs; the partition does not affect results. Nested calls run
// serially to avoid oversubscription.
namespace detail {
inline thread_local bool in_parallel_region = false;
}

inline int max_threads() {
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

inline void parallel_for(long long n, const std::function<void(long long)>& fn) {
  int threads = max_threads();
  if (threads <= 1 || n < 64 || detail::in_parallel_region) {
    for (long long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  long long chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    long long lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn]() {
      detail::in_parallel_region = true;
      for (long long i = lo; i < hi; ++i) fn(i);
      detail::in_parallel_region = false;
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace ct
