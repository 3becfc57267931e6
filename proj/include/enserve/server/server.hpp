#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <future>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "enserve/core/types.hpp"
#include "enserve/runtime/pipeline.hpp"

namespace enserve {

struct ServeConfig {
  std::string bind_host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  int flush_timeout_ms = 50;
  std::size_t input_width = 16;
  std::string backend = "synthetic";
  CombinationRule rule = CombinationRule::averaging();
};

// Deploy-mode HTTP wrapper around the inference system.
//
//   POST /v1/predict  body: JSON array of sample vectors
//                     response: JSON array of combined prediction vectors
//   GET  /v1/ready    200 once every worker reported ready, else 503
//   GET  /v1/stats    throughput, buffered work, matrix in use
//
// Client samples are buffered and flushed into one runtime pass per batch,
// either when a full segment is waiting or when the oldest request has
// waited flush_timeout_ms.
class PredictionServer {
 public:
  PredictionServer(ClusterSpec cluster, AllocationMatrix matrix,
                   ServeConfig config,
                   std::unique_ptr<PredictorFactory> backend = nullptr);
  ~PredictionServer();

  // Binds and starts serving. Throws Error when the port cannot be bound.
  void start();
  void stop();

  int port() const { return port_; }
  bool ready() const { return ready_.load(); }
  // True once the worker pool is up; false when startup failed or timed out.
  bool wait_ready(std::chrono::milliseconds timeout);
  std::string startup_error() const;

  // Blocks until stop() (for CLI use).
  void wait_stopped();

 private:
  struct PendingRequest;
  struct Flushed;
  class Impl;

  void init_pool();
  void dispatcher_loop();
  void flush_locked(std::unique_lock<std::mutex>& lock);

  ClusterSpec cluster_;
  AllocationMatrix matrix_;
  ServeConfig config_;
  std::unique_ptr<PredictorFactory> backend_;
  std::unique_ptr<Impl> impl_;  // httplib wiring

  std::unique_ptr<InferenceSystem> system_;
  std::atomic<bool> ready_{false};
  std::atomic<bool> stopping_{false};
  mutable std::mutex init_mutex_;
  std::condition_variable init_cv_;
  bool init_done_ = false;
  std::string init_error_;

  std::mutex buffer_mutex_;
  std::condition_variable buffer_cv_;
  std::deque<std::shared_ptr<PendingRequest>> buffer_;
  std::size_t buffered_samples_ = 0;

  std::thread init_thread_;
  std::thread dispatcher_;
  std::thread listener_;
  int port_ = 0;

  // stats
  std::atomic<std::uint64_t> requests_served_{0};
  std::atomic<std::uint64_t> samples_served_{0};
  std::atomic<double> last_flush_throughput_{0.0};
  std::chrono::steady_clock::time_point started_at_;
};

}  // namespace enserve
