#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace dcp {

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs body(i) for i in [0, count). Work is split into contiguous chunks so
/// that results written to slot i depend only on i, never on scheduling;
/// reductions over the slots afterwards are therefore thread-count invariant.
inline void parallel_for_index(int count, int threads,
                               const std::function<void(int)>& body) {
  threads = resolve_threads(threads);
  if (threads <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  if (threads > count) threads = count;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int k = 0; k < threads; ++k) {
    const int lo = static_cast<int>(static_cast<long long>(count) * k / threads);
    const int hi =
        static_cast<int>(static_cast<long long>(count) * (k + 1) / threads);
    pool.emplace_back([lo, hi, &body] {
      for (int i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace dcp
