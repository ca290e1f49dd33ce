#pragma once
// Thread pool helpers. The worker count comes from MVQR_THREADS (default:
// hardware concurrency). Reductions are decomposed into fixed-size chunks
// whose partial sums are combined in chunk order, so the result is the same
// for any thread count, including 1.

#include <atomic>
#include <cstdlib>
#include <cstddef>
#include <thread>
#include <vector>

namespace mvqr {

inline constexpr std::size_t kReduceChunk = 1024;

inline int thread_count() {
  if (const char* env = std::getenv("MVQR_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

// Runs f(c) for chunk indices c in [0, chunks), distributing chunks over the
// workers with an atomic cursor.
template <class F>
void parallel_for_chunks(std::size_t chunks, F&& f) {
  int workers = thread_count();
  if (workers <= 1 || chunks <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) f(c);
    return;
  }
  if (static_cast<std::size_t>(workers) > chunks)
    workers = static_cast<int>(chunks);
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (;;) {
      std::size_t c = next.fetch_add(1);
      if (c >= chunks) return;
      f(c);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers) - 1);
  for (int w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
}

// Runs f(i) for i in [0, n).
template <class F>
void parallel_for(std::size_t n, F&& f) {
  std::size_t chunks = (n + kReduceChunk - 1) / kReduceChunk;
  parallel_for_chunks(chunks, [&](std::size_t c) {
    std::size_t end = std::min(n, (c + 1) * kReduceChunk);
    for (std::size_t i = c * kReduceChunk; i < end; ++i) f(i);
  });
}

// Deterministic sum of f(0) + ... + f(n-1). Each fixed chunk is accumulated
// sequentially and the partials are added in index order afterwards, so the
// floating-point result does not depend on scheduling.
template <class F>
double parallel_sum(std::size_t n, F&& f) {
  std::size_t chunks = (n + kReduceChunk - 1) / kReduceChunk;
  std::vector<double> part(chunks, 0.0);
  parallel_for_chunks(chunks, [&](std::size_t c) {
    std::size_t end = std::min(n, (c + 1) * kReduceChunk);
    double s = 0.0;
    for (std::size_t i = c * kReduceChunk; i < end; ++i) s += f(i);
    part[c] = s;
  });
  double total = 0.0;
  for (double p : part) total += p;
  return total;
}

}  // namespace mvqr
