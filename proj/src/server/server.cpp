#include "enserve/server/server.hpp"

#include <httplib.h>

#include <json.hpp>

#include "enserve/core/spec_io.hpp"
#include "enserve/runtime/backend.hpp"

namespace enserve {

struct PredictionServer::PendingRequest {
  std::vector<float> samples;  // rows * width
  std::size_t rows = 0;
  std::chrono::steady_clock::time_point arrived;
  std::promise<RunOutput> promise;  // carries only this request's rows
};

class PredictionServer::Impl {
 public:
  httplib::Server server;
};

PredictionServer::PredictionServer(ClusterSpec cluster, AllocationMatrix matrix,
                                   ServeConfig config,
                                   std::unique_ptr<PredictorFactory> backend)
    : cluster_(std::move(cluster)),
      matrix_(std::move(matrix)),
      config_(std::move(config)),
      backend_(backend ? std::move(backend) : make_backend(config_.backend)),
      impl_(std::make_unique<Impl>()) {
  MatrixValidation verdict = validate_matrix(matrix_, cluster_);
  if (!verdict.ok) throw SpecError("cannot serve an invalid matrix");
}

PredictionServer::~PredictionServer() { stop(); }

void PredictionServer::init_pool() {
  try {
    system_ = std::make_unique<InferenceSystem>(matrix_, cluster_, *backend_,
                                                config_.rule);
    ready_.store(true);
  } catch (const std::exception& e) {
    std::lock_guard<std::mutex> lock(init_mutex_);
    init_error_ = e.what();
  }
  {
    std::lock_guard<std::mutex> lock(init_mutex_);
    init_done_ = true;
  }
  init_cv_.notify_all();
}

bool PredictionServer::wait_ready(std::chrono::milliseconds timeout) {
  std::unique_lock<std::mutex> lock(init_mutex_);
  init_cv_.wait_for(lock, timeout, [&] { return init_done_; });
  return ready_.load();
}

std::string PredictionServer::startup_error() const {
  std::lock_guard<std::mutex> lock(init_mutex_);
  return init_error_;
}

void PredictionServer::start() {
  started_at_ = std::chrono::steady_clock::now();
  httplib::Server& svr = impl_->server;

  svr.Get("/v1/ready", [this](const httplib::Request&, httplib::Response& res) {
    json body;
    body["ready"] = ready();
    std::string err = startup_error();
    if (!err.empty()) body["error"] = err;
    res.status = ready() ? 200 : 503;
    res.set_content(body.dump(), "application/json");
  });

  svr.Get("/v1/stats", [this](const httplib::Request&, httplib::Response& res) {
    json body;
    body["ready"] = ready();
    body["backend"] = backend_->name();
    body["rule"] = config_.rule.name();
    body["matrix"] = matrix_to_json(matrix_, cluster_);
    body["requests_served"] = requests_served_.load();
    body["samples_served"] = samples_served_.load();
    body["last_flush_throughput"] = last_flush_throughput_.load();
    {
      std::lock_guard<std::mutex> lock(buffer_mutex_);
      body["pending_requests"] = buffer_.size();
      body["pending_samples"] = buffered_samples_;
    }
    body["uptime_s"] = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - started_at_)
                           .count();
    res.set_content(body.dump(), "application/json");
  });

  svr.Post("/v1/predict", [this](const httplib::Request& req,
                                 httplib::Response& res) {
    if (!ready()) {
      res.status = 503;
      res.set_content(R"({"error":"not ready"})", "application/json");
      return;
    }
    json rows;
    try {
      rows = json::parse(req.body);
      if (!rows.is_array()) throw SpecError("body must be an array");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      return;
    }
    if (rows.empty()) {
      res.set_content("[]", "application/json");
      return;
    }

    auto pending = std::make_shared<PendingRequest>();
    pending->rows = rows.size();
    pending->samples.reserve(rows.size() * config_.input_width);
    for (const json& row : rows) {
      if (!row.is_array() || row.size() != config_.input_width) {
        res.status = 400;
        res.set_content(
            json{{"error", "every sample must have " +
                               std::to_string(config_.input_width) +
                               " features"}}
                .dump(),
            "application/json");
        return;
      }
      for (const json& v : row) pending->samples.push_back(v.get<float>());
    }
    pending->arrived = std::chrono::steady_clock::now();
    std::future<RunOutput> future = pending->promise.get_future();
    {
      std::lock_guard<std::mutex> lock(buffer_mutex_);
      buffer_.push_back(pending);
      buffered_samples_ += pending->rows;
    }
    buffer_cv_.notify_all();

    try {
      RunOutput out = future.get();
      json body = json::array();
      std::size_t width = static_cast<std::size_t>(out.output_width);
      for (std::size_t r = 0; r < pending->rows; ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < width; ++c)
          row.push_back(out.combined[r * width + c]);
        body.push_back(row);
      }
      json reply;
      if (out.winners.empty()) {
        res.set_content(body.dump(), "application/json");
      } else {
        reply["predictions"] = body;
        reply["winners"] = out.winners;
        res.set_content(reply.dump(), "application/json");
      }
      requests_served_.fetch_add(1);
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    }
  });

  if (config_.port == 0) {
    port_ = svr.bind_to_any_port(config_.bind_host);
    if (port_ <= 0) throw Error("cannot bind " + config_.bind_host);
  } else {
    if (!svr.bind_to_port(config_.bind_host, config_.port))
      throw Error("cannot bind " + config_.bind_host + ":" +
                  std::to_string(config_.port));
    port_ = config_.port;
  }

  init_thread_ = std::thread([this] { init_pool(); });
  dispatcher_ = std::thread([this] { dispatcher_loop(); });
  listener_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void PredictionServer::flush_locked(std::unique_lock<std::mutex>& lock) {
  std::vector<std::shared_ptr<PendingRequest>> batch(buffer_.begin(),
                                                     buffer_.end());
  buffer_.clear();
  buffered_samples_ = 0;
  lock.unlock();

  std::size_t total_rows = 0;
  for (const auto& r : batch) total_rows += r->rows;
  std::vector<float> data;
  data.reserve(total_rows * config_.input_width);
  for (const auto& r : batch)
    data.insert(data.end(), r->samples.begin(), r->samples.end());

  try {
    auto store = std::make_shared<SampleStore>(std::move(data), total_rows,
                                               config_.input_width);
    RunOutput out = system_->run(store);
    if (out.stats.elapsed_s > 0)
      last_flush_throughput_.store(total_rows / out.stats.elapsed_s);
    samples_served_.fetch_add(total_rows);

    std::size_t width = static_cast<std::size_t>(out.output_width);
    std::size_t row = 0;
    for (const auto& r : batch) {
      RunOutput piece;
      piece.output_width = out.output_width;
      piece.combined.assign(out.combined.begin() + row * width,
                            out.combined.begin() + (row + r->rows) * width);
      if (!out.winners.empty())
        piece.winners.assign(out.winners.begin() + row,
                             out.winners.begin() + row + r->rows);
      piece.stats = out.stats;
      r->promise.set_value(std::move(piece));
      row += r->rows;
    }
  } catch (...) {
    for (const auto& r : batch) r->promise.set_exception(std::current_exception());
  }
  lock.lock();
}

void PredictionServer::dispatcher_loop() {
  std::unique_lock<std::mutex> lock(buffer_mutex_);
  while (!stopping_.load()) {
    if (buffer_.empty()) {
      buffer_cv_.wait(lock, [&] { return stopping_.load() || !buffer_.empty(); });
      continue;
    }
    if (!ready_.load()) {
      // Pool still initializing; requests cannot arrive before ready, but a
      // failed startup must still unblock anything buffered.
      std::string err;
      {
        std::lock_guard<std::mutex> init_lock(init_mutex_);
        err = init_error_;
      }
      if (!err.empty()) {
        for (const auto& r : buffer_)
          r->promise.set_exception(
              std::make_exception_ptr(StartupError(err)));
        buffer_.clear();
        buffered_samples_ = 0;
        continue;
      }
      buffer_cv_.wait_for(lock, std::chrono::milliseconds(5));
      continue;
    }
    auto oldest = buffer_.front()->arrived;
    auto deadline = oldest + std::chrono::milliseconds(config_.flush_timeout_ms);
    bool full = buffered_samples_ >=
                static_cast<std::size_t>(cluster_.segment_size);
    if (!full && std::chrono::steady_clock::now() < deadline) {
      buffer_cv_.wait_until(lock, deadline, [&] {
        return stopping_.load() ||
               buffered_samples_ >=
                   static_cast<std::size_t>(cluster_.segment_size);
      });
      continue;
    }
    flush_locked(lock);
  }
  // Fail whatever is still buffered so no client hangs.
  for (const auto& r : buffer_)
    r->promise.set_exception(
        std::make_exception_ptr(Error("server shutting down")));
  buffer_.clear();
  buffered_samples_ = 0;
}

void PredictionServer::stop() {
  bool expected = false;
  if (!stopping_.compare_exchange_strong(expected, true)) {
    if (listener_.joinable()) listener_.join();
    return;
  }
  ready_.store(false);
  impl_->server.stop();
  buffer_cv_.notify_all();
  if (dispatcher_.joinable()) dispatcher_.join();
  if (listener_.joinable()) listener_.join();
  if (init_thread_.joinable()) init_thread_.join();
  if (system_) system_->shutdown();
}

void PredictionServer::wait_stopped() {
  if (listener_.joinable()) listener_.join();
}

}  // namespace enserve
