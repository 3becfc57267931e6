#include <doctest.h>

#include <httplib.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include "enserve/cli/commands.hpp"
#include "enserve/runtime/backend.hpp"
#include "enserve/server/cache.hpp"
#include "enserve/server/server.hpp"
#include "test_fixtures.hpp"

using namespace enserve;
using namespace enserve::testing;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("enserve-test-" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

ClusterSpec serve_cluster() {
  ClusterSpec c;
  c.devices = {gpu(0, 100000.0, 1e9, 0.0)};
  c.models = {model(0, "a", 10.0, 0.0, 1.0, 3),
              model(1, "b", 10.0, 0.0, 1.0, 3)};
  c.batch_menu = {8, 16, 32, 64, 128};
  c.segment_size = 128;
  return c;
}

AllocationMatrix serve_matrix() {
  AllocationMatrix A(1, 2);
  A.set(0, 0, 32);
  A.set(0, 1, 8);
  return A;
}

// load() blocks until released, to observe the not-ready window.
class SlowStartBackend : public PredictorFactory {
 public:
  std::unique_ptr<Predictor> make(const WorkerContext& ctx) const override {
    class Slow : public Predictor {
     public:
      Slow(std::unique_ptr<Predictor> inner, const SlowStartBackend* owner)
          : inner_(std::move(inner)), owner_(owner) {}
      bool load() override {
        std::unique_lock<std::mutex> lock(owner_->mutex_);
        owner_->cv_.wait(lock, [&] { return owner_->released_; });
        return inner_->load();
      }
      void predict(const SampleView& in, std::span<float> out) override {
        inner_->predict(in, out);
      }

     private:
      std::unique_ptr<Predictor> inner_;
      const SlowStartBackend* owner_;
    };
    return std::make_unique<Slow>(inner_.make(ctx), this);
  }
  std::string name() const override { return "slow-start"; }

  void release() const {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      released_ = true;
    }
    cv_.notify_all();
  }

 private:
  SyntheticBackend inner_;
  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  mutable bool released_ = false;
};

json post_predict(int port, const json& samples, int* status = nullptr) {
  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(30, 0);
  auto res = client.Post("/v1/predict", samples.dump(), "application/json");
  REQUIRE(res);
  if (status) *status = res->status;
  if (res->body.empty()) return json();
  return json::parse(res->body);
}

json sample_rows(std::size_t rows, std::size_t width, float base = 0.0f) {
  json out = json::array();
  for (std::size_t r = 0; r < rows; ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < width; ++c)
      row.push_back(base + static_cast<float>(r * width + c));
    out.push_back(row);
  }
  return out;
}

}  // namespace

TEST_CASE("digest is stable and key-sensitive") {
  ClusterSpec c = serve_cluster();
  OptimizerKey key;
  key.greedy = {10, 100, 1};
  key.default_batch = 8;
  key.bench_mode = "analytic";
  std::string a = cache_key(c, key);
  std::string b = cache_key(c, key);
  CHECK(a == b);
  c.devices[0].memory_mib += 1.0;  // one device's memory changes the key
  CHECK(cache_key(c, key) != a);
}

TEST_CASE("matrix cache stores, hits, and survives corruption") {
  TempDir dir;
  ClusterSpec c = serve_cluster();
  MatrixCache cache(dir.path.string());
  OptimizerKey key;
  key.greedy = {10, 100, 1};
  key.default_batch = 8;
  key.bench_mode = "analytic";
  std::string digest = cache_key(c, key);

  CHECK_FALSE(cache.lookup(digest, c).has_value());
  cache.store({digest, serve_matrix(), 123.5, 0}, c);
  std::optional<MatrixCacheEntry> hit = cache.lookup(digest, c);
  REQUIRE(hit.has_value());
  CHECK(hit->matrix == serve_matrix());
  CHECK(hit->score == doctest::Approx(123.5));
  CHECK(hit->created_at > 0);

  SUBCASE("truncated file is a miss, not a failure") {
    std::ofstream(dir.path / (digest + ".json"), std::ios::trunc) << "{ bro";
    CHECK_FALSE(cache.lookup(digest, c).has_value());
  }
  SUBCASE("store overwrites atomically") {
    AllocationMatrix other = serve_matrix();
    other.set(0, 0, 128);
    cache.store({digest, other, 200.0, 0}, c);
    CHECK(cache.lookup(digest, c)->matrix == other);
  }
}

TEST_CASE("second optimize run with identical specs is a pure cache hit") {
  TempDir dir;
  ClusterSpec c = serve_cluster();
  CommandOptions options;
  options.bench_mode = "analytic";
  options.cache_dir = dir.path.string();
  options.seed = 7;

  json first = cmd_optimize(c, options);
  CHECK(first["cache"] == "miss");
  CHECK(first["bench_calls"].get<int>() > 0);

  json second = cmd_optimize(c, options);
  CHECK(second["cache"] == "hit");
  CHECK(second["bench_calls"] == 0);
  CHECK(second["best_matrix"]["entries"] == first["best_matrix"]["entries"]);

  CommandOptions changed = options;
  changed.seed = 8;  // different key -> miss again
  CHECK(cmd_optimize(c, changed)["cache"] == "miss");
}

TEST_CASE("server answers predictions identically to the offline runtime") {
  ClusterSpec c = serve_cluster();
  AllocationMatrix A = serve_matrix();
  ServeConfig config;
  config.port = 0;
  config.input_width = 4;
  config.flush_timeout_ms = 10;
  PredictionServer server(c, A, config);
  server.start();
  REQUIRE(server.wait_ready(std::chrono::milliseconds(10000)));

  const std::size_t rows = 5;
  json request = sample_rows(rows, 4);
  int status = 0;
  json response = post_predict(server.port(), request, &status);
  CHECK(status == 200);
  REQUIRE(response.is_array());
  REQUIRE(response.size() == rows);

  // Offline pass over the same samples.
  std::vector<float> flat;
  for (const json& row : request)
    for (const json& v : row) flat.push_back(v.get<float>());
  auto store = std::make_shared<SampleStore>(flat, rows, 4);
  SyntheticBackend backend;
  InferenceResult offline = run_inference(store, A, c, backend,
                                          CombinationRule::averaging(),
                                          Mode::Deploy);
  const std::vector<float>& y = offline.output->combined;
  for (std::size_t r = 0; r < rows; ++r)
    for (int cl = 0; cl < 3; ++cl)
      CHECK(response[r][cl].get<double>() ==
            static_cast<double>(y[r * 3 + cl]));  // bit-identical

  SUBCASE("stats reports served work and the matrix in use") {
    httplib::Client client("127.0.0.1", server.port());
    auto res = client.Get("/v1/stats");
    REQUIRE(res);
    json stats = json::parse(res->body);
    CHECK(stats["ready"] == true);
    CHECK(stats["samples_served"].get<int>() >= 5);
    CHECK(stats["matrix"]["entries"][0][0] == 32);
    CHECK(stats["pending_requests"] == 0);
  }
  server.stop();
}

TEST_CASE("a full segment flushes immediately; a single sample waits the timer") {
  ClusterSpec c = serve_cluster();
  ServeConfig config;
  config.port = 0;
  config.input_width = 4;
  config.flush_timeout_ms = 200;
  PredictionServer server(c, serve_matrix(), config);
  server.start();
  REQUIRE(server.wait_ready(std::chrono::milliseconds(10000)));

  SUBCASE("capacity trigger") {
    auto t0 = std::chrono::steady_clock::now();
    json response = post_predict(server.port(), sample_rows(128, 4));
    double waited = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    CHECK(response.size() == 128);
    CHECK(waited < 0.19);  // did not sit out the 200 ms timer
  }
  SUBCASE("timer trigger") {
    auto t0 = std::chrono::steady_clock::now();
    json response = post_predict(server.port(), sample_rows(1, 4));
    double waited = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    CHECK(response.size() == 1);
    CHECK(waited >= 0.19);  // flushed by the timer
    CHECK(waited < 5.0);
  }
  server.stop();
}

TEST_CASE("requests before readiness get a 503 and ready flips once") {
  ClusterSpec c = serve_cluster();
  ServeConfig config;
  config.port = 0;
  config.input_width = 4;
  config.flush_timeout_ms = 10;
  auto slow = std::make_unique<SlowStartBackend>();
  SlowStartBackend* handle = slow.get();
  PredictionServer server(c, serve_matrix(), config, std::move(slow));
  server.start();
  CHECK_FALSE(server.ready());

  httplib::Client client("127.0.0.1", server.port());
  auto ready_res = client.Get("/v1/ready");
  REQUIRE(ready_res);
  CHECK(ready_res->status == 503);

  int status = 0;
  post_predict(server.port(), sample_rows(1, 4), &status);
  CHECK(status == 503);

  handle->release();  // workers may now finish loading
  CHECK(server.wait_ready(std::chrono::milliseconds(10000)));
  auto ready_after = client.Get("/v1/ready");
  REQUIRE(ready_after);
  CHECK(ready_after->status == 200);
  post_predict(server.port(), sample_rows(1, 4), &status);
  CHECK(status == 200);
  server.stop();
}

TEST_CASE("bad requests are rejected with a 400") {
  ClusterSpec c = serve_cluster();
  ServeConfig config;
  config.port = 0;
  config.input_width = 4;
  config.flush_timeout_ms = 10;
  PredictionServer server(c, serve_matrix(), config);
  server.start();
  REQUIRE(server.wait_ready(std::chrono::milliseconds(10000)));

  httplib::Client client("127.0.0.1", server.port());
  auto res = client.Post("/v1/predict", "not json", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);

  auto wrong_width =
      client.Post("/v1/predict", sample_rows(2, 3).dump(), "application/json");
  REQUIRE(wrong_width);
  CHECK(wrong_width->status == 400);

  auto empty = client.Post("/v1/predict", "[]", "application/json");
  REQUIRE(empty);
  CHECK(empty->status == 200);
  CHECK(json::parse(empty->body).empty());
  server.stop();
}

TEST_CASE("concatenated buffered requests equal one offline pass") {
  ClusterSpec c = serve_cluster();
  ServeConfig config;
  config.port = 0;
  config.input_width = 4;
  config.flush_timeout_ms = 120;  // let both requests land in one flush
  PredictionServer server(c, serve_matrix(), config);
  server.start();
  REQUIRE(server.wait_ready(std::chrono::milliseconds(10000)));

  json first = sample_rows(3, 4, 0.0f);
  json second = sample_rows(2, 4, 100.0f);
  json r1, r2;
  std::thread t1([&] { r1 = post_predict(server.port(), first); });
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  std::thread t2([&] { r2 = post_predict(server.port(), second); });
  t1.join();
  t2.join();

  std::vector<float> flat;
  for (const json& req : {first, second})
    for (const json& row : req)
      for (const json& v : row) flat.push_back(v.get<float>());
  auto store = std::make_shared<SampleStore>(flat, 5, 4);
  SyntheticBackend backend;
  InferenceResult offline = run_inference(store, serve_matrix(), c, backend,
                                          CombinationRule::averaging(),
                                          Mode::Deploy);
  const std::vector<float>& y = offline.output->combined;
  json joined = json::array();
  for (const json& row : r1) joined.push_back(row);
  for (const json& row : r2) joined.push_back(row);
  REQUIRE(joined.size() == 5);
  for (std::size_t r = 0; r < 5; ++r)
    for (int cl = 0; cl < 3; ++cl)
      CHECK(joined[r][cl].get<double>() == static_cast<double>(y[r * 3 + cl]));
  server.stop();
}

TEST_CASE("resolve_matrix prefers the explicit path and guides otherwise") {
  TempDir dir;
  ClusterSpec c = serve_cluster();
  CommandOptions options;
  options.bench_mode = "analytic";

  CHECK_THROWS_AS(resolve_matrix(c, "", options), SpecError);

  options.cache_dir = dir.path.string();
  CHECK_THROWS_AS(resolve_matrix(c, "", options), SpecError);  // empty cache

  cmd_optimize(c, options);
  AllocationMatrix cached = resolve_matrix(c, "", options);
  CHECK(validate_matrix(cached, c).ok);

  std::string path = (dir.path / "explicit.json").string();
  save_json_file(path, matrix_to_json(serve_matrix(), c));
  CHECK(resolve_matrix(c, path, options) == serve_matrix());
}
