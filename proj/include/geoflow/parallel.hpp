#pragma once

#include <cstdlib>
#include <thread>
#include <vector>

namespace geoflow {

// Worker cap from GEOFLOW_THREADS (default 1).
inline int max_threads() {
  const char* env = std::getenv("GEOFLOW_THREADS");
  if (!env) return 1;
  const int n = std::atoi(env);
  return n > 0 ? n : 1;
}

// Runs fn(i) for i in [0, n). Results must be written to pre-sized storage;
// fn must be pure up to its own slot.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
  const int workers = std::min(n, max_threads());
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&fn, n, w, workers] {
      for (int i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace geoflow
