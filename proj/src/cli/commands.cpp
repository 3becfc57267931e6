#include "enserve/cli/commands.hpp"

#include <chrono>
#include <sstream>

#include "enserve/cost/cost_model.hpp"
#include "enserve/memory/memory_model.hpp"
#include "enserve/runtime/backend.hpp"
#include "enserve/server/cache.hpp"

namespace enserve {

namespace {

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

int resolve_default_batch(const ClusterSpec& cluster,
                          const CommandOptions& options) {
  return options.default_batch > 0 ? options.default_batch
                                   : cluster.min_batch();
}

OptimizerKey optimizer_key(const ClusterSpec& cluster,
                           const CommandOptions& options) {
  OptimizerKey key;
  key.greedy = {options.max_iter, options.max_neighs, options.seed};
  key.default_batch = resolve_default_batch(cluster, options);
  key.bench_mode = options.bench_mode;
  key.calib_samples = options.calib_samples;
  key.repeats = options.repeats;
  return key;
}

json trace_to_json(const OptimizationTrace& trace) {
  json out;
  out["start_score"] = trace.start_score;
  out["final_score"] = trace.final_score;
  out["stop_reason"] = to_string(trace.stop_reason);
  out["iterations"] = json::array();
  for (const GreedyIteration& it : trace.iterations) {
    out["iterations"].push_back({{"iter", it.index},
                                 {"neighbors_evaluated", it.neighbors_evaluated},
                                 {"best_score", it.best_score},
                                 {"accepted", it.accepted}});
  }
  return out;
}

json matrix_summary(const AllocationMatrix& A, const ClusterSpec& cluster) {
  json out = matrix_to_json(A, cluster);
  out["workers"] = A.worker_count();
  json colocated = json::array();
  for (int d = 0; d < A.device_count(); ++d)
    if (A.is_colocated(d)) colocated.push_back(cluster.devices[d].label());
  json data_parallel = json::array();
  for (int m = 0; m < A.model_count(); ++m)
    if (A.is_data_parallel(m)) data_parallel.push_back(cluster.models[m].name);
  out["colocated_devices"] = colocated;
  out["data_parallel_models"] = data_parallel;
  return out;
}

}  // namespace

std::shared_ptr<const SampleStore> make_calibration_store(
    std::size_t nb_samples, std::size_t width) {
  std::vector<float> data(nb_samples * width);
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = static_cast<float>(i % 251) / 251.0f;
  return std::make_shared<SampleStore>(std::move(data), nb_samples, width);
}

ClusterScoreFn make_bench_oracle(const CommandOptions& options, int* calls) {
  if (options.bench_mode == "analytic") {
    return [calls](const AllocationMatrix& A, const ClusterSpec& cl) {
      if (calls) ++*calls;
      return predict_ensemble_throughput(A, cl);
    };
  }
  if (options.bench_mode != "measured")
    throw SpecError("bench mode must be 'measured' or 'analytic'");
  auto backend = std::shared_ptr<PredictorFactory>(make_backend(options.backend));
  auto calib =
      make_calibration_store(options.calib_samples, options.input_width);
  int repeats = options.repeats;
  return [calls, backend, calib, repeats](const AllocationMatrix& A,
                                          const ClusterSpec& cl) {
    if (calls) ++*calls;
    return bench(A, calib, cl, *backend, repeats).throughput;
  };
}

json cmd_optimize(const ClusterSpec& cluster, const CommandOptions& options) {
  auto t0 = std::chrono::steady_clock::now();
  json report;
  report["command"] = "optimize";
  report["seed"] = options.seed;
  report["bench_mode"] = options.bench_mode;
  OptimizerKey key = optimizer_key(cluster, options);
  std::string digest = cache_key(cluster, key);
  report["inputs_digest"] = digest;

  if (!options.cache_dir.empty()) {
    MatrixCache cache(options.cache_dir);
    if (std::optional<MatrixCacheEntry> hit = cache.lookup(digest, cluster)) {
      report["cache"] = "hit";
      report["bench_calls"] = 0;
      report["matrices_evaluated"] = 0;
      report["score"] = hit->score;
      report["best_matrix"] = matrix_summary(hit->matrix, cluster);
      report["wall_time_s"] = elapsed_since(t0);
      return report;
    }
    report["cache"] = "miss";
  }

  int calls = 0;
  ClusterScoreFn oracle = make_bench_oracle(options, &calls);
  AllocationMatrix a1 =
      worst_fit_decreasing(cluster, key.default_batch);
  GreedyResult greedy = bounded_greedy(
      a1, cluster,
      [&](const AllocationMatrix& A) { return oracle(A, cluster); },
      key.greedy);

  report["bench_calls"] = calls;
  report["matrices_evaluated"] = calls;
  report["scores"] = {{"worst_fit", greedy.trace.start_score},
                      {"worst_fit_plus_greedy", greedy.trace.final_score}};
  report["score"] = greedy.trace.final_score;
  report["best_matrix"] = matrix_summary(greedy.matrix, cluster);
  report["trace"] = trace_to_json(greedy.trace);

  if (!options.cache_dir.empty()) {
    MatrixCache cache(options.cache_dir);
    cache.store({digest, greedy.matrix, greedy.trace.final_score, 0}, cluster);
    report["cache_stored"] = true;
  }
  report["wall_time_s"] = elapsed_since(t0);
  return report;
}

json cmd_bench(const ClusterSpec& cluster, const AllocationMatrix& matrix,
               const CommandOptions& options) {
  auto t0 = std::chrono::steady_clock::now();
  json report;
  report["command"] = "bench";
  report["seed"] = options.seed;
  report["repeats"] = options.repeats;

  if (options.bench_mode == "analytic") {
    double score = predict_ensemble_throughput(matrix, cluster);
    report["throughput"] = score;
    report["rsd"] = 0.0;
    report["runs"] = json::array({score});
  } else {
    auto backend = make_backend(options.backend);
    auto calib =
        make_calibration_store(options.calib_samples, options.input_width);
    BenchResult result =
        bench(matrix, calib, cluster, *backend, options.repeats);
    report["throughput"] = result.throughput;
    report["rsd"] = result.rsd;
    report["runs"] = result.runs;
    report["nb_samples"] = result.nb_samples;
    report["elapsed_s"] = result.elapsed_s;
  }
  report["matrix"] = matrix_summary(matrix, cluster);
  report["wall_time_s"] = elapsed_since(t0);
  return report;
}

json cmd_count(const ClusterSpec& cluster, const CommandOptions& options) {
  auto t0 = std::chrono::steady_clock::now();
  int B = static_cast<int>(cluster.batch_menu.size());
  int D = cluster.device_count();
  int M = cluster.model_count();

  json report;
  report["command"] = "count";
  report["menu_size"] = B;
  report["devices"] = D;
  report["models"] = M;
  report["total_matrices"] = count_total_matrices(B, D, M).str();
  report["neighbor_formula"] = {
      {"all_allowed", count_total_neighs(B, D, M, 0)},
      {"one_forbidden_per_model", count_total_neighs(B, D, M, M)}};

  try {
    AllocationMatrix a1 =
        worst_fit_decreasing(cluster, resolve_default_batch(cluster, options));
    NeighborhoodStats stats = enumerated_neighborhood_stats(a1, cluster);
    report["worst_fit_neighborhood"] = {
        {"size", stats.size},
        {"forbidden_moves", stats.forbidden},
        {"formula_minus_enumerated",
         count_total_neighs(B, D, M, 0) - static_cast<long long>(stats.size)}};
  } catch (const AllocationError& e) {
    report["worst_fit_neighborhood"] = {{"error", e.what()}};
  }
  report["wall_time_s"] = elapsed_since(t0);
  return report;
}

json cmd_baseline(const ClusterSpec& cluster, const CommandOptions& options) {
  auto t0 = std::chrono::steady_clock::now();
  json report;
  report["command"] = "baseline";
  report["seed"] = options.seed;
  report["bench_mode"] = options.bench_mode;

  int bbs_calls = 0;
  ClusterScoreFn bbs_oracle = make_bench_oracle(options, &bbs_calls);
  try {
    BaselineResult bbs = bbs_baseline(cluster, bbs_oracle);
    int scan_calls = bbs.bench_calls;
    double bbs_score = bbs_oracle(bbs.matrix, cluster);  // final ensemble score
    report["bbs"] = {{"applicable", true},
                     {"score", bbs_score},
                     {"bench_calls", scan_calls},
                     {"matrix", matrix_summary(bbs.matrix, cluster)}};
  } catch (const BaselineError& e) {
    report["bbs"] = {{"applicable", false}, {"reason", e.what()}};
  }

  int opt_calls = 0;
  ClusterScoreFn oracle = make_bench_oracle(options, &opt_calls);
  AllocationMatrix a1 =
      worst_fit_decreasing(cluster, resolve_default_batch(cluster, options));
  GreedyResult greedy = bounded_greedy(
      a1, cluster,
      [&](const AllocationMatrix& A) { return oracle(A, cluster); },
      {options.max_iter, options.max_neighs, options.seed});
  report["optimizer"] = {{"score", greedy.trace.final_score},
                         {"bench_calls", opt_calls},
                         {"matrix", matrix_summary(greedy.matrix, cluster)}};
  report["wall_time_s"] = elapsed_since(t0);
  return report;
}

AllocationMatrix resolve_matrix(const ClusterSpec& cluster,
                                const std::string& matrix_path,
                                const CommandOptions& options) {
  if (!matrix_path.empty())
    return matrix_from_json(load_json_file(matrix_path), cluster);
  if (!options.cache_dir.empty()) {
    MatrixCache cache(options.cache_dir);
    std::string digest = cache_key(cluster, optimizer_key(cluster, options));
    if (std::optional<MatrixCacheEntry> hit = cache.lookup(digest, cluster))
      return hit->matrix;
    throw SpecError(
        "no cached matrix for these specs; run `enserve optimize` with the "
        "same flags first, or pass --matrix");
  }
  throw SpecError("no matrix: pass --matrix or --cache-dir");
}

namespace {

void render(std::ostringstream& out, const std::string& prefix,
            const json& value) {
  if (value.is_object() && !value.empty()) {
    for (auto it = value.begin(); it != value.end(); ++it)
      render(out, prefix.empty() ? it.key() : prefix + "." + it.key(),
             it.value());
  } else {
    out << prefix << ": " << value.dump() << "\n";
  }
}

}  // namespace

std::string render_report(const json& report) {
  std::ostringstream out;
  render(out, "", report);
  return out.str();
}

}  // namespace enserve
