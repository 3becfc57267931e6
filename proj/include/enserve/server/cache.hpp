#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "enserve/core/spec_io.hpp"
#include "enserve/opt/optimizer.hpp"

namespace enserve {

struct MatrixCacheEntry {
  std::string key;  // digest of the specs and optimizer settings
  AllocationMatrix matrix;
  double score = 0.0;       // samples per second at optimization time
  std::int64_t created_at = 0;  // unix seconds
};

// FNV-1a over a canonical serialization; stable across runs and platforms.
std::string digest_hex(const std::string& canonical);

// Settings that change the optimized matrix are part of the cache key.
struct OptimizerKey {
  GreedyConfig greedy;
  int default_batch = 0;
  std::string bench_mode;  // "measured" or "analytic"
  std::size_t calib_samples = 0;
  int repeats = 1;
};

std::string cache_key(const ClusterSpec& cluster, const OptimizerKey& key);

// One JSON document per key under a cache directory. Corrupt or mismatched
// files are treated as misses (with a warning), never as failures.
class MatrixCache {
 public:
  explicit MatrixCache(std::string directory);

  std::optional<MatrixCacheEntry> lookup(const std::string& key,
                                         const ClusterSpec& cluster) const;
  void store(const MatrixCacheEntry& entry, const ClusterSpec& cluster) const;

  const std::string& directory() const { return directory_; }

 private:
  std::string path_for(const std::string& key) const;
  std::string directory_;
};

}  // namespace enserve
