#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace fairdiag {

// Effective worker count: FAIR_DIAG_THREADS caps it, 0 or unset means auto.
inline int thread_budget() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  const char* env = std::getenv("FAIR_DIAG_THREADS");
  if (env != nullptr) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0 && static_cast<unsigned>(v) < hw) return static_cast<int>(v);
  }
  return static_cast<int>(hw);
}

// Runs fn(shard_index, begin, end) over contiguous shards of [0, n).
// Shards are fixed by n and the thread budget, so any reduction done per
// shard and combined in shard order is deterministic.
inline void parallel_shards(size_t n, const std::function<void(int, size_t, size_t)>& fn) {
  const int workers = static_cast<int>(std::min<size_t>(thread_budget(), n == 0 ? 1 : n));
  if (workers <= 1) {
    fn(0, 0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const size_t chunk = (n + workers - 1) / workers;
  for (int t = 0; t < workers; ++t) {
    const size_t b = std::min(n, static_cast<size_t>(t) * chunk);
    const size_t e = std::min(n, b + chunk);
    pool.emplace_back([&fn, t, b, e] { fn(t, b, e); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace fairdiag
