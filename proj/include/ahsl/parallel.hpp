#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <thread>
#include <utility>
#include <vector>

namespace ahsl {

// Global worker count. 1 is the sequential reference mode: loops run in
// index order on the calling thread and reductions accumulate left to
// right, so results are bit-exact across runs. Higher counts split loops
// into contiguous chunks, one per worker; partial sums are combined in
// chunk order, so results are deterministic for a fixed count but may
// differ from the reference by floating-point reassociation only.
inline std::atomic<int>& detail_thread_count() {
  static std::atomic<int> n{1};
  return n;
}

inline int thread_count() { return detail_thread_count().load(std::memory_order_relaxed); }

inline void set_thread_count(int n) {
  detail_thread_count().store(std::max(1, n), std::memory_order_relaxed);
}

inline std::vector<std::pair<std::int64_t, std::int64_t>> split_range(std::int64_t n, int parts) {
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  parts = static_cast<int>(std::min<std::int64_t>(std::max(1, parts), std::max<std::int64_t>(n, 1)));
  const std::int64_t base = n / parts;
  const std::int64_t rem = n % parts;
  std::int64_t begin = 0;
  for (int i = 0; i < parts; ++i) {
    const std::int64_t len = base + (i < rem ? 1 : 0);
    out.emplace_back(begin, begin + len);
    begin += len;
  }
  return out;
}

/// Runs body(begin, end) over contiguous chunks of [0, n).
template <class Fn>
void parallel_for(std::int64_t n, Fn&& body) {
  if (n <= 0) return;
  const int workers = thread_count();
  if (workers <= 1 || n < 2048) {
    body(std::int64_t{0}, n);
    return;
  }
  const auto chunks = split_range(n, workers);
  std::vector<std::thread> pool;
  pool.reserve(chunks.size() - 1);
  for (std::size_t i = 1; i < chunks.size(); ++i) {
    pool.emplace_back([&body, c = chunks[i]] { body(c.first, c.second); });
  }
  body(chunks[0].first, chunks[0].second);
  for (auto& t : pool) t.join();
}

/// Deterministic chunked reduction: chunk_sum(begin, end) -> double, partials
/// combined in chunk order.
template <class Fn>
double parallel_sum(std::int64_t n, Fn&& chunk_sum) {
  if (n <= 0) return 0.0;
  const int workers = thread_count();
  if (workers <= 1 || n < 2048) {
    return chunk_sum(std::int64_t{0}, n);
  }
  const auto chunks = split_range(n, workers);
  std::vector<double> partial(chunks.size(), 0.0);
  std::vector<std::thread> pool;
  pool.reserve(chunks.size() - 1);
  for (std::size_t i = 1; i < chunks.size(); ++i) {
    pool.emplace_back([&, i] { partial[i] = chunk_sum(chunks[i].first, chunks[i].second); });
  }
  partial[0] = chunk_sum(chunks[0].first, chunks[0].second);
  for (auto& t : pool) t.join();
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace ahsl
