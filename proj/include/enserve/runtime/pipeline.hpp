#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <thread>
#include <vector>

#include "enserve/core/types.hpp"
#include "enserve/runtime/backend.hpp"
#include "enserve/runtime/channel.hpp"
#include "enserve/runtime/combine.hpp"
#include "enserve/runtime/message.hpp"

namespace enserve {

enum class Mode { Deploy, Benchmark };

struct RunStats {
  std::size_t nb_samples = 0;
  std::size_t segments = 0;
  std::size_t data_messages = 0;
  std::vector<std::size_t> segment_rows;
  double elapsed_s = 0.0;  // broadcast to last accumulated message
};

struct RunOutput {
  std::vector<float> combined;  // nb_samples x output_width
  std::vector<int> winners;     // majority vote only
  int output_width = 0;
  RunStats stats;
};

// Score of one benchmarked matrix: median throughput over repeats.
struct BenchResult {
  double throughput = 0.0;  // samples per second
  double elapsed_s = 0.0;
  std::size_t nb_samples = 0;
  std::vector<double> runs;  // per-repeat throughputs
  double rsd = 0.0;          // relative standard deviation over runs
};

struct InferenceResult {
  std::optional<RunOutput> output;  // Deploy mode
  std::optional<BenchResult> score;  // Benchmark mode
};

struct PoolOptions {
  std::chrono::milliseconds startup_deadline{30000};
  std::chrono::milliseconds shutdown_deadline{120000};
  std::chrono::milliseconds run_deadline{600000};
  std::size_t stage_capacity = 2;  // batches buffered between worker stages
};

// Enqueues every segment id once per model queue; returns the segment count.
std::size_t broadcast_segments(std::size_t nb_samples, int segment_size,
                               const std::vector<Channel<int>*>& model_queues);

// The worker pool plus broadcaster-side and accumulator-side plumbing for
// one allocation matrix. Workers come up in the constructor and answer any
// number of runs until shutdown.
class InferenceSystem {
 public:
  InferenceSystem(const AllocationMatrix& A, const ClusterSpec& cluster,
                  const PredictorFactory& backend, CombinationRule rule,
                  PoolOptions options = {});
  ~InferenceSystem();

  InferenceSystem(const InferenceSystem&) = delete;
  InferenceSystem& operator=(const InferenceSystem&) = delete;

  // One full pass over X. Benchmark mode times broadcast-to-completion.
  RunOutput run(std::shared_ptr<const SampleStore> X);
  RunOutput run(std::shared_ptr<const SampleStore> X, CombinationRule rule);

  // Split-phase variant of run().
  void begin_run(std::shared_ptr<const SampleStore> X);
  void begin_run(std::shared_ptr<const SampleStore> X, CombinationRule rule);
  std::size_t broadcast();
  RunOutput await_run();

  // Sends one shutdown sentinel per worker, drains in-flight segments and
  // joins every stage. Idempotent.
  void shutdown();

  int worker_count() const { return static_cast<int>(workers_.size()); }
  std::vector<int> workers_per_model() const;
  const AllocationMatrix& matrix() const { return matrix_; }
  const ClusterSpec& cluster() const { return cluster_; }

 private:
  struct Worker;
  struct RunState;

  std::shared_ptr<const SampleStore> current_store() const;
  void accumulator_loop();
  void fail_run(std::exception_ptr error);

  AllocationMatrix matrix_;
  ClusterSpec cluster_;
  CombinationRule default_rule_;
  PoolOptions options_;
  int output_width_ = 0;

  std::vector<std::unique_ptr<Channel<int>>> model_queues_;
  Channel<PredictionMessage> prediction_queue_;
  std::vector<std::unique_ptr<Worker>> workers_;
  std::thread accumulator_;

  mutable std::mutex store_mutex_;
  std::shared_ptr<const SampleStore> store_;

  std::unique_ptr<RunState> run_state_;
  std::chrono::steady_clock::time_point run_started_;
  bool run_open_ = false;
  bool shut_down_ = false;
};

// The inference system as a one-shot function f(X, A) -> {Y, S}.
InferenceResult run_inference(std::shared_ptr<const SampleStore> X,
                              const AllocationMatrix& A,
                              const ClusterSpec& cluster,
                              const PredictorFactory& backend,
                              CombinationRule rule, Mode mode);

// Scores a matrix on calibration data: 0 when it does not fit in memory or
// any worker reports out-of-memory, else the median throughput over
// `repeats` benchmark passes.
BenchResult bench(const AllocationMatrix& A,
                  std::shared_ptr<const SampleStore> calib,
                  const ClusterSpec& cluster, const PredictorFactory& backend,
                  int repeats, PoolOptions options = {});

double median(std::vector<double> values);
double relative_standard_deviation(const std::vector<double>& values);

}  // namespace enserve
