#pragma once

#include <functional>
#include <stdexcept>
#include <thread>
#include <vector>

namespace uts {

// 0 means "use hardware concurrency"; hardware_concurrency itself can
// report 0 on exotic platforms, so floor at one.
inline int resolve_threads(int requested) {
  if (requested < 0) throw std::invalid_argument("threads must be >= 0");
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Splits [0, count) into at most `threads` contiguous chunks and runs fn on
// each. fn(chunk_index, begin, end). Chunk boundaries depend only on count
// and the thread count, never on scheduling, so any per-chunk results can be
// reduced in chunk order for deterministic totals.
inline void parallel_chunks(int64_t count, int threads,
                            const std::function<void(int, int64_t, int64_t)>& fn) {
  if (count <= 0) return;
  const int n = std::min<int64_t>(threads < 1 ? 1 : threads, count);
  const int64_t base = count / n, rem = count % n;
  if (n == 1) {
    fn(0, 0, count);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(n));
  int64_t begin = 0;
  for (int i = 0; i < n; ++i) {
    const int64_t len = base + (i < rem ? 1 : 0);
    pool.emplace_back(fn, i, begin, begin + len);
    begin += len;
  }
  for (auto& t : pool) t.join();
}

}  // namespace uts
