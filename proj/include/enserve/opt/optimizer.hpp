#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "enserve/core/types.hpp"

namespace enserve {

using BigInt = boost::multiprecision::cpp_int;

// Scores an allocation matrix in samples per second. 0 means infeasible.
using ScoreFn = std::function<double(const AllocationMatrix&)>;
// Same, for callers that rebuild the cluster per call (per-model scans).
using ClusterScoreFn =
    std::function<double(const AllocationMatrix&, const ClusterSpec&)>;

struct GreedyConfig {
  int max_iter = 10;
  int max_neighs = 100;
  std::uint64_t rng_seed = 0;
};

enum class StopReason { local_optimum, iter_cap };

std::string to_string(StopReason reason);

struct GreedyIteration {
  int index = 0;
  int neighbors_evaluated = 0;
  double best_score = 0.0;
  bool accepted = false;
};

struct OptimizationTrace {
  std::vector<GreedyIteration> iterations;
  double start_score = 0.0;
  double final_score = 0.0;
  StopReason stop_reason = StopReason::local_optimum;

  int bench_calls() const;  // including the initial evaluation
};

// Places every model once at default_batch, heaviest first, each on the
// device with the most remaining memory; GPUs take priority and CPUs are
// used only when no GPU placement fits. Throws AllocationError when a model
// fits nowhere.
AllocationMatrix worst_fit_decreasing(const ClusterSpec& cluster,
                                      int default_batch);

// All valid matrices differing from A in exactly one cell (new value in
// {0} u batch_menu). Deterministic: row-major cells, ascending values.
std::vector<AllocationMatrix> neighborhood(const AllocationMatrix& A,
                                           const ClusterSpec& cluster);

// ((B+1)^D - 1)^M, exact.
BigInt count_total_matrices(int menu_size, int device_count, int model_count);

// (B+1)*D*M - F, the reporting formula for the per-iteration neighbor count.
// The enumerated neighborhood is smaller (it excludes keeping a cell at its
// current value); see enumerated_neighborhood_stats.
long long count_total_neighs(int menu_size, int device_count, int model_count,
                             long long forbidden);

struct NeighborhoodStats {
  std::size_t size = 0;        // |neighborhood(A)|
  std::size_t forbidden = 0;   // single-cell edits rejected as zero-column
};

NeighborhoodStats enumerated_neighborhood_stats(const AllocationMatrix& A,
                                                const ClusterSpec& cluster);

// Visits every valid matrix exactly once in a fixed order. Refuses (throws
// CapExceededError) when the space is larger than `cap`.
void for_each_matrix(const ClusterSpec& cluster, BigInt cap,
                     const std::function<void(const AllocationMatrix&)>& visit);

std::vector<AllocationMatrix> enumerate_all_matrices(const ClusterSpec& cluster,
                                                     BigInt cap);

// max_iter, or D - M when that is larger: large clusters get a chance to
// spread a small ensemble over every device.
int effective_max_iter(int device_count, int model_count, int max_iter);

struct GreedyResult {
  AllocationMatrix matrix;
  OptimizationTrace trace;
};

// Local search from A0: each iteration scores (up to max_neighs randomly
// drawn) neighbors and moves to the best one if it strictly improves, else
// stops. Never returns a matrix scoring below A0.
GreedyResult bounded_greedy(const AllocationMatrix& A0,
                            const ClusterSpec& cluster, const ScoreFn& bench,
                            const GreedyConfig& config);

struct BaselineResult {
  AllocationMatrix matrix;
  int bench_calls = 0;                 // model_count * menu size
  std::vector<int> chosen_batches;     // per model id
};

// Best Batch Strategy: model i alone on GPU i (heaviest model on the lowest
// GPU id), each batch size scanned in isolation. Throws BaselineError when
// there are fewer GPUs than models.
BaselineResult bbs_baseline(const ClusterSpec& cluster,
                            const ClusterScoreFn& bench);

}  // namespace enserve
