#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace fgr {

namespace detail {
inline std::atomic<int> g_jobs{0};  // 0 = hardware concurrency
inline thread_local bool g_in_parallel = false;
}

inline int parallel_jobs() {
  int j = detail::g_jobs.load(std::memory_order_relaxed);
  if (j > 0) return j;
  unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

inline void set_parallel_jobs(int jobs) {
  detail::g_jobs.store(jobs, std::memory_order_relaxed);
}

// Runs fn(i) for i in [0, count). Tasks must write disjoint outputs; the
// partition is static, so results do not depend on the worker count.
// Nested calls run serially in the calling worker.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const int jobs = parallel_jobs();
  if (jobs <= 1 || count <= 1 || detail::g_in_parallel) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      detail::g_in_parallel = true;
      for (std::size_t i = w; i < count; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace fgr
