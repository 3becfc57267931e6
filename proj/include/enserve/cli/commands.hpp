#pragma once

#include <cstdint>
#include <string>

#include "enserve/core/spec_io.hpp"
#include "enserve/opt/optimizer.hpp"
#include "enserve/runtime/pipeline.hpp"

namespace enserve {

struct CommandOptions {
  std::uint64_t seed = 0;
  int repeats = 1;
  int max_iter = 10;
  int max_neighs = 100;
  int default_batch = 0;  // 0 means the menu minimum
  std::string cache_dir;
  std::string bench_mode = "measured";  // or "analytic"
  std::string backend = "synthetic";
  std::size_t calib_samples = 1024;
  std::size_t input_width = 16;
};

// Calibration samples for measured benchmarks. Content does not affect the
// shipped backends; it only has to exist and have a stable shape.
std::shared_ptr<const SampleStore> make_calibration_store(
    std::size_t nb_samples, std::size_t width);

// Scoring oracle per the configured bench mode; increments *calls per use.
ClusterScoreFn make_bench_oracle(const CommandOptions& options, int* calls);

// Runs worst-fit-decreasing then bounded greedy, consults/updates the matrix
// cache, and reports both scores side by side.
json cmd_optimize(const ClusterSpec& cluster, const CommandOptions& options);

// Benchmarks one matrix document: median throughput and RSD over repeats.
json cmd_bench(const ClusterSpec& cluster, const AllocationMatrix& matrix,
               const CommandOptions& options);

// Size of the matrix space, the neighbor-count formula at its F extremes,
// and the enumerated neighborhood of the worst-fit matrix.
json cmd_count(const ClusterSpec& cluster, const CommandOptions& options);

// BBS baseline vs the optimizer: score and bench-call count for each.
json cmd_baseline(const ClusterSpec& cluster, const CommandOptions& options);

// Resolves the matrix for cmd_serve: explicit path wins, else cache lookup.
// Throws SpecError with guidance when neither is available.
AllocationMatrix resolve_matrix(const ClusterSpec& cluster,
                                const std::string& matrix_path,
                                const CommandOptions& options);

std::string render_report(const json& report);

}  // namespace enserve
