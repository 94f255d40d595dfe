#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace recallforge {

// Unbiased-enough bounded draw via the multiply-shift trick. We avoid
// std::uniform_int_distribution because its output differs across standard
// library implementations, which would break cross-platform determinism.
inline std::size_t bounded_draw(std::mt19937_64& gen, std::size_t n) {
  const unsigned __int128 wide = static_cast<unsigned __int128>(gen()) * n;
  return static_cast<std::size_t>(wide >> 64);
}

// First k elements of a seeded random permutation of [0, n): partial
// Fisher-Yates over an index vector. O(n) memory, O(n + k) time.
inline std::vector<std::uint32_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                             std::uint64_t seed) {
  if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
  std::vector<std::uint32_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(i);
  std::mt19937_64 gen(seed);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + bounded_draw(gen, n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace recallforge
