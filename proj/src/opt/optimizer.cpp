#include "enserve/opt/optimizer.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "enserve/memory/memory_model.hpp"
#include "enserve/util/rng.hpp"

namespace enserve {

std::string to_string(StopReason reason) {
  return reason == StopReason::local_optimum ? "local_optimum" : "iter_cap";
}

int OptimizationTrace::bench_calls() const {
  int n = 1;  // the starting matrix
  for (const GreedyIteration& it : iterations) n += it.neighbors_evaluated;
  return n;
}

namespace {

// Heaviest first; ties keep the lower model id.
std::vector<int> models_by_decreasing_weight(const ClusterSpec& cluster) {
  std::vector<int> order(cluster.models.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return cluster.models[a].weight_mib > cluster.models[b].weight_mib;
  });
  return order;
}

}  // namespace

AllocationMatrix worst_fit_decreasing(const ClusterSpec& cluster,
                                      int default_batch) {
  if (!cluster.menu_contains(default_batch))
    throw SpecError("default batch " + std::to_string(default_batch) +
                    " is not in the batch menu");

  AllocationMatrix A(cluster.device_count(), cluster.model_count());
  for (int m : models_by_decreasing_weight(cluster)) {
    bool placed = false;
    for (DeviceKind kind : {DeviceKind::GPU, DeviceKind::CPU}) {
      std::optional<int> d =
          more_remaining_memory(A, default_batch, kind, cluster);
      if (!d) continue;
      AllocationMatrix candidate = A;
      candidate.set(*d, m, default_batch);
      if (fit_mem(candidate, cluster).fits) {
        A = std::move(candidate);
        placed = true;
        break;
      }
    }
    if (!placed)
      throw AllocationError(cluster.models[m].name,
                            "no device have enough memory for model '" +
                                cluster.models[m].name + "'");
  }
  return A;
}

std::vector<AllocationMatrix> neighborhood(const AllocationMatrix& A,
                                           const ClusterSpec& cluster) {
  std::vector<AllocationMatrix> out;
  for (int d = 0; d < A.device_count(); ++d) {
    for (int m = 0; m < A.model_count(); ++m) {
      int current = A.at(d, m);
      for (std::size_t vi = 0; vi <= cluster.batch_menu.size(); ++vi) {
        int v = vi == 0 ? 0 : cluster.batch_menu[vi - 1];
        if (v == current) continue;
        if (v == 0 && A.column_worker_count(m) == 1)
          continue;  // would zero the column
        AllocationMatrix B = A;
        B.set(d, m, v);
        out.push_back(std::move(B));
      }
    }
  }
  return out;
}

NeighborhoodStats enumerated_neighborhood_stats(const AllocationMatrix& A,
                                                const ClusterSpec& cluster) {
  NeighborhoodStats stats;
  for (int d = 0; d < A.device_count(); ++d) {
    for (int m = 0; m < A.model_count(); ++m) {
      int current = A.at(d, m);
      for (std::size_t vi = 0; vi <= cluster.batch_menu.size(); ++vi) {
        int v = vi == 0 ? 0 : cluster.batch_menu[vi - 1];
        if (v == current) continue;
        if (v == 0 && A.column_worker_count(m) == 1)
          ++stats.forbidden;
        else
          ++stats.size;
      }
    }
  }
  return stats;
}

BigInt count_total_matrices(int menu_size, int device_count, int model_count) {
  if (menu_size < 1 || device_count < 1 || model_count < 1)
    throw std::invalid_argument("counts must be >= 1");
  BigInt per_column =
      boost::multiprecision::pow(BigInt(menu_size + 1), device_count) - 1;
  return boost::multiprecision::pow(per_column, model_count);
}

long long count_total_neighs(int menu_size, int device_count, int model_count,
                             long long forbidden) {
  if (forbidden < 0) throw std::invalid_argument("forbidden must be >= 0");
  return static_cast<long long>(menu_size + 1) * device_count * model_count -
         forbidden;
}

void for_each_matrix(const ClusterSpec& cluster, BigInt cap,
                     const std::function<void(const AllocationMatrix&)>& visit) {
  int D = cluster.device_count();
  int M = cluster.model_count();
  int B = static_cast<int>(cluster.batch_menu.size());
  BigInt total = count_total_matrices(B, D, M);
  if (total > cap)
    throw CapExceededError("matrix space holds " + total.str() +
                           " matrices, above the cap of " + cap.str());

  // Column patterns are indexed 1..(B+1)^D-1; index digits in base B+1 give
  // the per-device value (0 = empty, k = batch_menu[k-1]). Index 0 would be
  // the forbidden all-zero column.
  BigInt per_column_big = boost::multiprecision::pow(BigInt(B + 1), D);
  if (per_column_big > BigInt(std::numeric_limits<std::uint64_t>::max()))
    throw CapExceededError("column space does not fit a 64-bit counter");
  std::uint64_t per_column = per_column_big.convert_to<std::uint64_t>();

  std::vector<std::uint64_t> odometer(M, 1);
  AllocationMatrix A(D, M);
  auto apply_column = [&](int m, std::uint64_t pattern) {
    for (int d = 0; d < D; ++d) {
      int digit = static_cast<int>(pattern % (B + 1));
      A.set(d, m, digit == 0 ? 0 : cluster.batch_menu[digit - 1]);
      pattern /= (B + 1);
    }
  };
  for (int m = 0; m < M; ++m) apply_column(m, odometer[m]);

  while (true) {
    visit(A);
    int m = M - 1;
    while (m >= 0) {
      if (++odometer[m] < per_column) {
        apply_column(m, odometer[m]);
        break;
      }
      odometer[m] = 1;
      apply_column(m, odometer[m]);
      --m;
    }
    if (m < 0) return;
  }
}

std::vector<AllocationMatrix> enumerate_all_matrices(const ClusterSpec& cluster,
                                                     BigInt cap) {
  std::vector<AllocationMatrix> out;
  for_each_matrix(cluster, cap,
                  [&](const AllocationMatrix& A) { out.push_back(A); });
  return out;
}

int effective_max_iter(int device_count, int model_count, int max_iter) {
  int spread = device_count - model_count;
  return spread > max_iter ? spread : max_iter;
}

GreedyResult bounded_greedy(const AllocationMatrix& A0,
                            const ClusterSpec& cluster, const ScoreFn& bench,
                            const GreedyConfig& config) {
  if (config.max_iter < 1 || config.max_neighs < 1)
    throw SpecError("greedy config requires max_iter >= 1 and max_neighs >= 1");

  GreedyResult result{A0, {}};
  double current = bench(A0);
  result.trace.start_score = current;

  int cap = effective_max_iter(cluster.device_count(), cluster.model_count(),
                               config.max_iter);
  std::mt19937_64 rng(config.rng_seed);
  result.trace.stop_reason = StopReason::iter_cap;

  for (int iter = 0; iter < cap; ++iter) {
    std::vector<AllocationMatrix> neighs = neighborhood(result.matrix, cluster);
    if (neighs.size() > static_cast<std::size_t>(config.max_neighs)) {
      std::vector<std::size_t> keep = sample_indices(
          rng, neighs.size(), static_cast<std::size_t>(config.max_neighs));
      std::vector<AllocationMatrix> sampled;
      sampled.reserve(keep.size());
      for (std::size_t i : keep) sampled.push_back(std::move(neighs[i]));
      neighs = std::move(sampled);
    }

    double best_score = 0.0;
    const AllocationMatrix* best = nullptr;
    for (const AllocationMatrix& candidate : neighs) {
      double score = bench(candidate);
      if (best == nullptr || score > best_score) {
        best = &candidate;
        best_score = score;
      }
    }

    bool accepted = best != nullptr && best_score > current;
    result.trace.iterations.push_back(
        {iter, static_cast<int>(neighs.size()), best_score, accepted});
    if (!accepted) {
      result.trace.stop_reason = StopReason::local_optimum;
      break;
    }
    result.matrix = *best;
    current = best_score;
  }

  result.trace.final_score = current;
  return result;
}

BaselineResult bbs_baseline(const ClusterSpec& cluster,
                            const ClusterScoreFn& bench) {
  std::vector<int> gpus;
  for (const DeviceSpec& d : cluster.devices)
    if (d.kind == DeviceKind::GPU) gpus.push_back(d.id);
  if (static_cast<int>(gpus.size()) < cluster.model_count())
    throw BaselineError("BBS needs one GPU per model: " +
                        std::to_string(cluster.model_count()) + " models, " +
                        std::to_string(gpus.size()) + " GPUs");

  BaselineResult result;
  result.matrix =
      AllocationMatrix(cluster.device_count(), cluster.model_count());
  result.chosen_batches.assign(cluster.models.size(), 0);

  std::vector<int> order = models_by_decreasing_weight(cluster);
  for (std::size_t i = 0; i < order.size(); ++i) {
    int m = order[i];
    int gpu = gpus[i];

    // Score the model alone on its GPU, one batch size at a time.
    ClusterSpec solo = cluster;
    solo.models = {cluster.models[m]};
    solo.models[0].id = 0;
    int best_batch = cluster.batch_menu.front();
    double best_score = -1.0;
    for (int b : cluster.batch_menu) {
      AllocationMatrix probe(cluster.device_count(), 1);
      probe.set(gpu, 0, b);
      double score = bench(probe, solo);
      ++result.bench_calls;
      if (score > best_score) {
        best_score = score;
        best_batch = b;
      }
    }
    result.matrix.set(gpu, m, best_batch);
    result.chosen_batches[m] = best_batch;
  }
  return result;
}

}  // namespace enserve
