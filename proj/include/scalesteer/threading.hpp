#ifndef SCALESTEER_THREADING_HPP
#define SCALESTEER_THREADING_HPP

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace scalesteer {

inline int thread_count() {
  if (const char* env = std::getenv("SCALESTEER_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n). Each index is processed exactly once; callers
// needing deterministic reductions must write to index-addressed slots and
// combine in index order afterwards.
template <typename Fn>
void parallel_for(size_t n, Fn&& fn, int threads = -1) {
  if (threads < 0) threads = thread_count();
  if (threads <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  size_t nthreads = std::min<size_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (size_t t = 0; t < nthreads; ++t) {
    size_t begin = n * t / nthreads;
    size_t end = n * (t + 1) / nthreads;
    pool.emplace_back([begin, end, &fn]() {
      for (size_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace scalesteer

#endif  // SCALESTEER_THREADING_HPP
