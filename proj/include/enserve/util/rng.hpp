#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace enserve {

// Unbiased index in [0, n) via rejection sampling. std::uniform_int_distribution
// is implementation-defined, so seeded runs would not reproduce across
// standard libraries; this does.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  if (n <= 1) return 0;
  std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                        std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

// k distinct indices drawn uniformly from [0, n), returned in ascending
// order so downstream iteration keeps the source ordering.
inline std::vector<std::size_t> sample_indices(std::mt19937_64& rng,
                                               std::size_t n, std::size_t k) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace enserve
