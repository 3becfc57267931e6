#include "enserve/runtime/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <iostream>
#include <mutex>

#include "enserve/cost/cost_model.hpp"
#include "enserve/memory/memory_model.hpp"

namespace enserve {

namespace {

constexpr int kShutdownSentinel = -1;

// batcher -> predictor
struct BatchJob {
  bool poison = false;
  int segment_id = 0;
  std::size_t seg_start = 0;
  std::size_t seg_rows = 0;
  std::size_t start = 0;  // global index of this batch
  std::size_t rows = 0;
  int batch_count = 0;  // batches in the segment
};

// predictor -> prediction sender
struct PredJob {
  bool poison = false;
  int segment_id = 0;
  std::size_t seg_start = 0;
  std::size_t seg_rows = 0;
  std::size_t start = 0;
  std::size_t rows = 0;
  int batch_count = 0;
  std::vector<float> block;
};

}  // namespace

std::size_t broadcast_segments(std::size_t nb_samples, int segment_size,
                               const std::vector<Channel<int>*>& model_queues) {
  std::size_t segments = num_segments(nb_samples, segment_size);
  for (std::size_t s = 0; s < segments; ++s)
    for (Channel<int>* queue : model_queues)
      queue->push(static_cast<int>(s));
  return segments;
}

struct InferenceSystem::Worker {
  int model_id = 0;
  int device_id = 0;
  int batch = 1;
  int output_width = 1;
  std::unique_ptr<Predictor> predictor;
  Channel<int>* input = nullptr;
  Channel<BatchJob> to_predictor;
  Channel<PredJob> to_sender;
  std::thread batcher_thread;
  std::thread predictor_thread;
  std::thread sender_thread;

  explicit Worker(std::size_t stage_capacity)
      : to_predictor(stage_capacity), to_sender(stage_capacity) {}
};

struct InferenceSystem::RunState {
  std::mutex mutex;
  std::condition_variable cv;
  int ready_count = 0;
  bool oom = false;
  std::exception_ptr error;
  std::unique_ptr<PredictionAccumulator> sink;
  std::chrono::steady_clock::time_point completed_at;
  int exited_stages = 0;
};

InferenceSystem::InferenceSystem(const AllocationMatrix& A,
                                 const ClusterSpec& cluster,
                                 const PredictorFactory& backend,
                                 CombinationRule rule, PoolOptions options)
    : matrix_(A),
      cluster_(cluster),
      default_rule_(std::move(rule)),
      options_(options),
      prediction_queue_(0),
      run_state_(std::make_unique<RunState>()) {
  MatrixValidation verdict = validate_matrix(A, cluster);
  if (!verdict.ok) {
    std::string what = "allocation matrix is invalid:";
    for (const MatrixViolation& v : verdict.violations)
      what += " " + v.describe() + ";";
    throw SpecError(what);
  }
  output_width_ = cluster.models.front().output_width;
  for (const ModelSpec& m : cluster.models)
    if (m.output_width != output_width_)
      throw SpecError("ensemble models disagree on output width");

  for (int m = 0; m < cluster.model_count(); ++m)
    model_queues_.push_back(std::make_unique<Channel<int>>(0));

  // One worker per nonzero cell, row-major.
  for (int d = 0; d < A.device_count(); ++d) {
    double load = device_load(A, d, cluster_);
    int colocated = A.row_worker_count(d);
    for (int m = 0; m < A.model_count(); ++m) {
      int b = A.at(d, m);
      if (b == 0) continue;
      auto worker = std::make_unique<Worker>(options_.stage_capacity);
      worker->model_id = m;
      worker->device_id = d;
      worker->batch = b;
      worker->output_width = output_width_;
      worker->input = model_queues_[m].get();
      WorkerContext ctx{cluster_.models[m], cluster_.devices[d], b, colocated,
                        load};
      worker->predictor = backend.make(ctx);
      workers_.push_back(std::move(worker));
    }
  }

  accumulator_ = std::thread([this] { accumulator_loop(); });

  auto guard = [this](auto body) {
    try {
      body();
    } catch (...) {
      fail_run(std::current_exception());
    }
    {
      std::lock_guard<std::mutex> lock(run_state_->mutex);
      ++run_state_->exited_stages;
    }
    run_state_->cv.notify_all();
  };

  for (std::unique_ptr<Worker>& wp : workers_) {
    Worker* w = wp.get();
    w->batcher_thread = std::thread([this, w, guard] {
      guard([this, w] {
        while (true) {
          std::optional<int> s = w->input->pop();
          if (!s || *s == kShutdownSentinel) {
            w->to_predictor.push(BatchJob{.poison = true});
            break;
          }
          std::shared_ptr<const SampleStore> store = current_store();
          if (!store) throw ProtocolError("segment broadcast with no samples");
          Segment seg =
              segment_bounds(*s, cluster_.segment_size, store->nb_samples());
          int batch_count = static_cast<int>(
              (seg.size() + w->batch - 1) / static_cast<std::size_t>(w->batch));
          for (int i = 0; i < batch_count; ++i) {
            std::size_t start = seg.start + static_cast<std::size_t>(i) * w->batch;
            std::size_t rows =
                std::min<std::size_t>(w->batch, seg.end - start);
            w->to_predictor.push(BatchJob{false, seg.id, seg.start, seg.size(),
                                          start, rows, batch_count});
          }
        }
      });
    });

    w->predictor_thread = std::thread([this, w, guard] {
      guard([this, w] {
        bool loaded = w->predictor->load();
        prediction_queue_.push(loaded ? PredictionMessage::ready()
                                      : PredictionMessage::oom());
        while (true) {
          std::optional<BatchJob> job = w->to_predictor.pop();
          if (!job || job->poison) {
            w->to_sender.push(PredJob{.poison = true});
            break;
          }
          if (!loaded) continue;  // drain after an out-of-memory report
          std::shared_ptr<const SampleStore> store = current_store();
          SampleView view{store->rows(job->start, job->rows), job->start,
                          job->rows, store->width()};
          std::vector<float> block(job->rows *
                                   static_cast<std::size_t>(w->output_width));
          w->predictor->predict(view, block);
          w->to_sender.push(PredJob{false, job->segment_id, job->seg_start,
                                    job->seg_rows, job->start, job->rows,
                                    job->batch_count, std::move(block)});
        }
      });
    });

    w->sender_thread = std::thread([this, w, guard] {
      guard([this, w] {
        int open_segment = -1;
        int received = 0;
        std::vector<float> buffer;
        while (true) {
          std::optional<PredJob> job = w->to_sender.pop();
          if (!job || job->poison) break;
          std::size_t width = static_cast<std::size_t>(w->output_width);
          if (job->segment_id != open_segment) {
            open_segment = job->segment_id;
            received = 0;
            buffer.assign(job->seg_rows * width, 0.0f);
          }
          std::copy(job->block.begin(), job->block.end(),
                    buffer.begin() + (job->start - job->seg_start) * width);
          if (++received == job->batch_count) {
            prediction_queue_.push(PredictionMessage::data(
                open_segment, w->model_id, job->seg_rows, std::move(buffer)));
            buffer = {};
            open_segment = -1;
          }
        }
      });
    });
  }

  // Ready gate: the pool serves only after every worker reported in.
  std::unique_lock<std::mutex> lock(run_state_->mutex);
  bool ok = run_state_->cv.wait_for(lock, options_.startup_deadline, [&] {
    return run_state_->ready_count == static_cast<int>(workers_.size()) ||
           run_state_->oom || run_state_->error != nullptr;
  });
  bool oom = run_state_->oom;
  std::exception_ptr error = run_state_->error;
  lock.unlock();
  if (!ok || oom || error) {
    shutdown();
    if (error) std::rethrow_exception(error);
    throw StartupError(oom ? "a worker reported out-of-memory during startup"
                           : "workers did not come up before the deadline");
  }
}

InferenceSystem::~InferenceSystem() {
  try {
    shutdown();
  } catch (...) {
    // Destructor must not throw; shutdown errors were already reported.
  }
}

std::shared_ptr<const SampleStore> InferenceSystem::current_store() const {
  std::lock_guard<std::mutex> lock(store_mutex_);
  return store_;
}

void InferenceSystem::fail_run(std::exception_ptr error) {
  {
    std::lock_guard<std::mutex> lock(run_state_->mutex);
    if (!run_state_->error) run_state_->error = error;
  }
  run_state_->cv.notify_all();
}

void InferenceSystem::accumulator_loop() {
  while (std::optional<PredictionMessage> msg = prediction_queue_.pop()) {
    std::lock_guard<std::mutex> lock(run_state_->mutex);
    if (msg->is_ready()) {
      ++run_state_->ready_count;
    } else if (msg->is_oom()) {
      run_state_->oom = true;
    } else if (run_state_->sink) {
      try {
        run_state_->sink->add(std::move(*msg));
        if (run_state_->sink->complete())
          run_state_->completed_at = std::chrono::steady_clock::now();
      } catch (...) {
        if (!run_state_->error) run_state_->error = std::current_exception();
      }
    } else if (!run_state_->error) {
      run_state_->error = std::make_exception_ptr(
          ProtocolError("prediction arrived with no run open"));
    }
    run_state_->cv.notify_all();
  }
}

void InferenceSystem::begin_run(std::shared_ptr<const SampleStore> X) {
  begin_run(std::move(X), default_rule_);
}

void InferenceSystem::begin_run(std::shared_ptr<const SampleStore> X,
                                CombinationRule rule) {
  if (!X) throw SpecError("no sample store");
  std::lock_guard<std::mutex> lock(run_state_->mutex);
  if (shut_down_) throw Error("inference system is shut down");
  if (run_open_) throw Error("previous run still open");
  if (run_state_->oom)
    throw StartupError("a worker reported out-of-memory");
  if (run_state_->error) std::rethrow_exception(run_state_->error);
  {
    std::lock_guard<std::mutex> store_lock(store_mutex_);
    store_ = std::move(X);
  }
  run_state_->sink = std::make_unique<PredictionAccumulator>(
      store_->nb_samples(), output_width_, cluster_.model_count(),
      cluster_.segment_size, std::move(rule));
  run_open_ = true;
}

std::size_t InferenceSystem::broadcast() {
  {
    std::lock_guard<std::mutex> lock(run_state_->mutex);
    if (!run_open_) throw Error("broadcast without begin_run");
  }
  run_started_ = std::chrono::steady_clock::now();
  std::vector<Channel<int>*> queues;
  for (std::unique_ptr<Channel<int>>& q : model_queues_) queues.push_back(q.get());
  return broadcast_segments(current_store()->nb_samples(),
                            cluster_.segment_size, queues);
}

RunOutput InferenceSystem::await_run() {
  std::unique_lock<std::mutex> lock(run_state_->mutex);
  if (!run_open_) throw Error("await without begin_run");
  bool ok = run_state_->cv.wait_for(lock, options_.run_deadline, [&] {
    return (run_state_->sink && run_state_->sink->complete()) ||
           run_state_->oom || run_state_->error != nullptr;
  });
  run_open_ = false;
  if (run_state_->error) {
    std::exception_ptr error = run_state_->error;
    lock.unlock();
    shutdown();
    std::rethrow_exception(error);
  }
  if (run_state_->oom) {
    lock.unlock();
    shutdown();
    throw StartupError("a worker reported out-of-memory");
  }
  if (!ok) {
    lock.unlock();
    shutdown();
    throw Error("run did not complete before the deadline");
  }

  std::unique_ptr<PredictionAccumulator> sink = std::move(run_state_->sink);
  auto completed = sink->expected_messages() == 0
                       ? std::chrono::steady_clock::now()
                       : run_state_->completed_at;
  lock.unlock();

  RunOutput out;
  out.output_width = sink->output_width();
  out.stats.nb_samples = current_store()->nb_samples();
  out.stats.segments = sink->segment_rows().size();
  out.stats.data_messages = sink->data_messages();
  out.stats.segment_rows = sink->segment_rows();
  out.stats.elapsed_s =
      std::chrono::duration<double>(completed - run_started_).count();
  out.combined = sink->take_combined();
  out.winners = sink->take_winners();
  return out;
}

RunOutput InferenceSystem::run(std::shared_ptr<const SampleStore> X) {
  return run(std::move(X), default_rule_);
}

RunOutput InferenceSystem::run(std::shared_ptr<const SampleStore> X,
                               CombinationRule rule) {
  begin_run(std::move(X), std::move(rule));
  broadcast();
  return await_run();
}

std::vector<int> InferenceSystem::workers_per_model() const {
  std::vector<int> counts(cluster_.model_count(), 0);
  for (const std::unique_ptr<Worker>& w : workers_) ++counts[w->model_id];
  return counts;
}

void InferenceSystem::shutdown() {
  {
    std::lock_guard<std::mutex> lock(run_state_->mutex);
    if (shut_down_) return;
    shut_down_ = true;
  }

  // One sentinel per worker; FIFO order lets in-flight segments finish first.
  for (const std::unique_ptr<Worker>& w : workers_)
    model_queues_[w->model_id]->push(kShutdownSentinel);

  {
    std::unique_lock<std::mutex> lock(run_state_->mutex);
    bool exited = run_state_->cv.wait_for(lock, options_.shutdown_deadline, [&] {
      return run_state_->exited_stages == static_cast<int>(3 * workers_.size());
    });
    if (!exited) {
      std::cerr << "enserve: forced termination: "
                << (3 * workers_.size()) - run_state_->exited_stages
                << " worker stages still running after "
                << options_.shutdown_deadline.count() << " ms\n";
      lock.unlock();
      for (const std::unique_ptr<Worker>& w : workers_) {
        w->input->close();
        w->to_predictor.close();
        w->to_sender.close();
      }
    }
  }

  for (const std::unique_ptr<Worker>& w : workers_) {
    if (w->batcher_thread.joinable()) w->batcher_thread.join();
    if (w->predictor_thread.joinable()) w->predictor_thread.join();
    if (w->sender_thread.joinable()) w->sender_thread.join();
  }

  // Workers are done: everything they sent is in the queue; drain it all.
  prediction_queue_.close();
  if (accumulator_.joinable()) accumulator_.join();
}

InferenceResult run_inference(std::shared_ptr<const SampleStore> X,
                              const AllocationMatrix& A,
                              const ClusterSpec& cluster,
                              const PredictorFactory& backend,
                              CombinationRule rule, Mode mode) {
  if (!X) throw SpecError("no sample store");
  if (mode == Mode::Benchmark && X->nb_samples() == 0)
    throw SpecError("benchmark mode needs a nonempty sample store");

  InferenceSystem system(A, cluster, backend, rule);
  RunOutput out = system.run(X);
  system.shutdown();

  InferenceResult result;
  if (mode == Mode::Deploy) {
    result.output = std::move(out);
  } else {
    BenchResult score;
    score.nb_samples = out.stats.nb_samples;
    score.elapsed_s = std::max(out.stats.elapsed_s, 1e-9);
    score.throughput = score.nb_samples / score.elapsed_s;
    score.runs = {score.throughput};
    score.rsd = 0.0;
    result.score = score;
  }
  return result;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

double relative_standard_deviation(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= values.size();
  if (mean == 0.0) return 0.0;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (values.size() - 1)) / mean;
}

BenchResult bench(const AllocationMatrix& A,
                  std::shared_ptr<const SampleStore> calib,
                  const ClusterSpec& cluster, const PredictorFactory& backend,
                  int repeats, PoolOptions options) {
  if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
  if (!calib || calib->nb_samples() == 0)
    throw SpecError("empty calibration set");

  BenchResult result;
  result.nb_samples = calib->nb_samples();

  try {
    if (!validate_matrix(A, cluster).ok) return result;
  } catch (const SpecError&) {
    return result;  // wrong shape scores 0, like any unusable matrix
  }
  if (!fit_mem(A, cluster).fits) return result;

  try {
    InferenceSystem system(A, cluster, backend, CombinationRule::averaging(),
                           options);
    std::vector<double> elapsed;
    for (int r = 0; r < repeats; ++r) {
      RunOutput out = system.run(calib);
      elapsed.push_back(std::max(out.stats.elapsed_s, 1e-9));
      result.runs.push_back(calib->nb_samples() / elapsed.back());
    }
    system.shutdown();
    result.elapsed_s = median(elapsed);
    result.throughput = median(result.runs);
    result.rsd = relative_standard_deviation(result.runs);
  } catch (const StartupError&) {
    result.runs.clear();
    result.throughput = 0.0;  // a worker did not fit
  }
  return result;
}

}  // namespace enserve
