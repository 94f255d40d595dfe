#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace recallforge {

/// Runs fn(begin, end) over [0, n) split into fixed-size chunks.
///
/// Chunk boundaries depend only on n, never on the worker count, and every
/// chunk writes to a disjoint output slice chosen by its index range. Results
/// are therefore byte-identical for any `threads` value.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (n == 0) return;
  constexpr std::size_t kChunk = 1024;
  if (threads <= 1 || n <= kChunk) {
    fn(std::size_t{0}, n);
    return;
  }
  const std::size_t n_chunks = (n + kChunk - 1) / kChunk;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      const std::size_t begin = c * kChunk;
      const std::size_t end = std::min(begin + kChunk, n);
      fn(begin, end);
    }
  };
  const unsigned n_workers = std::min<std::size_t>(threads, n_chunks);
  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace recallforge
