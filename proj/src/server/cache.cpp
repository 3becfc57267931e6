#include "enserve/server/cache.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace enserve {

std::string digest_hex(const std::string& canonical) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV offset basis
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ULL;  // FNV prime
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string cache_key(const ClusterSpec& cluster, const OptimizerKey& key) {
  json doc;
  doc["specs"] = cluster_to_json(cluster);
  doc["optimizer"] = {{"max_iter", key.greedy.max_iter},
                      {"max_neighs", key.greedy.max_neighs},
                      {"rng_seed", key.greedy.rng_seed},
                      {"default_batch", key.default_batch},
                      {"bench_mode", key.bench_mode},
                      {"calib_samples", key.calib_samples},
                      {"repeats", key.repeats}};
  return digest_hex(doc.dump());
}

MatrixCache::MatrixCache(std::string directory)
    : directory_(std::move(directory)) {
  std::filesystem::create_directories(directory_);
}

std::string MatrixCache::path_for(const std::string& key) const {
  return (std::filesystem::path(directory_) / (key + ".json")).string();
}

std::optional<MatrixCacheEntry> MatrixCache::lookup(
    const std::string& key, const ClusterSpec& cluster) const {
  std::string path = path_for(key);
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    json doc = load_json_file(path);
    if (doc.at("key").get<std::string>() != key) {
      std::cerr << "enserve: cache file " << path << " has a stale key; ignoring\n";
      return std::nullopt;
    }
    MatrixCacheEntry entry;
    entry.key = key;
    entry.matrix = matrix_from_json(doc.at("matrix"), cluster);
    entry.score = doc.at("score").get<double>();
    entry.created_at = doc.value("created_at", std::int64_t{0});
    if (!validate_matrix(entry.matrix, cluster).ok) {
      std::cerr << "enserve: cached matrix in " << path << " is invalid; ignoring\n";
      return std::nullopt;
    }
    return entry;
  } catch (const std::exception& e) {
    std::cerr << "enserve: cannot read cache file " << path << " (" << e.what()
              << "); treating as a miss\n";
    return std::nullopt;
  }
}

void MatrixCache::store(const MatrixCacheEntry& entry,
                        const ClusterSpec& cluster) const {
  json doc;
  doc["key"] = entry.key;
  doc["matrix"] = matrix_to_json(entry.matrix, cluster);
  doc["score"] = entry.score;
  doc["created_at"] =
      entry.created_at != 0
          ? entry.created_at
          : static_cast<std::int64_t>(
                std::chrono::duration_cast<std::chrono::seconds>(
                    std::chrono::system_clock::now().time_since_epoch())
                    .count());
  std::string path = path_for(entry.key);
  std::string tmp = path + ".tmp";
  save_json_file(tmp, doc);
  std::filesystem::rename(tmp, path);  // atomic overwrite
}

}  // namespace enserve
