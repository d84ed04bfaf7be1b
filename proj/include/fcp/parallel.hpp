#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace fcp {

/// Concurrency width from FCP_THREADS (default 1, which keeps every code
/// path bit-reproducible without thread scheduling in the picture).
inline int thread_width() {
  const char* env = std::getenv("FCP_THREADS");
  if (!env) return 1;
  int n = std::atoi(env);
  if (n < 1) return 1;
  unsigned hw = std::thread::hardware_concurrency();
  if (hw > 0 && n > static_cast<int>(hw)) n = static_cast<int>(hw);
  return n;
}

/// Index-parallel loop. Work items must be independent; callers that need a
/// deterministic result write into per-index slots and reduce serially.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
  int width = thread_width();
  if (width <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  std::size_t per = (count + static_cast<std::size_t>(width) - 1) / static_cast<std::size_t>(width);
  for (int t = 0; t < width; ++t) {
    std::size_t begin = static_cast<std::size_t>(t) * per;
    std::size_t end = std::min(count, begin + per);
    if (begin >= end) break;
    workers.emplace_back([&fn, begin, end] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& w : workers) w.join();
}

}  // namespace fcp
