#include "enserve/runtime/backend.hpp"

#include <chrono>
#include <thread>

#include "enserve/cost/cost_model.hpp"

namespace enserve {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

float synthetic_prediction(int model_id, std::size_t sample_index,
                           int class_index) {
  std::uint64_t key = splitmix64(
      splitmix64(static_cast<std::uint64_t>(model_id) + 1) ^
      splitmix64(static_cast<std::uint64_t>(sample_index) * 0x9e3779b9ULL) ^
      splitmix64(static_cast<std::uint64_t>(class_index) + 0x51ed270bULL));
  // Top 24 bits give a float exactly representable in [0, 1).
  return static_cast<float>(key >> 40) / 16777216.0f;
}

namespace {

class SyntheticPredictor : public Predictor {
 public:
  explicit SyntheticPredictor(const WorkerContext& ctx)
      : ctx_(ctx),
        seconds_per_sample_(ctx.model.cost_per_sample /
                            (ctx.device.compute_rate / ctx.colocated_count)),
        overhead_s_(ctx.device.batch_overhead_s) {}

  bool load() override { return ctx_.device_load_mib <= ctx_.device.memory_mib; }

  void predict(const SampleView& in, std::span<float> out) override {
    // Full batches sleep exactly the cost model's service time; a short
    // trailing batch sleeps pro rata.
    double t = in.rows * seconds_per_sample_ + overhead_s_;
    if (t > 0)
      std::this_thread::sleep_for(std::chrono::duration<double>(t));
    int width = ctx_.model.output_width;
    for (std::size_t r = 0; r < in.rows; ++r)
      for (int c = 0; c < width; ++c)
        out[r * width + c] =
            synthetic_prediction(ctx_.model.id, in.first_index + r, c);
  }

 private:
  WorkerContext ctx_;
  double seconds_per_sample_;
  double overhead_s_;
};

class FakeZeroPredictor : public Predictor {
 public:
  bool load() override { return true; }
  void predict(const SampleView& in, std::span<float> out) override {
    std::fill(out.begin(), out.end(), 0.0f);
    (void)in;
  }
};

}  // namespace

std::unique_ptr<Predictor> SyntheticBackend::make(
    const WorkerContext& ctx) const {
  return std::make_unique<SyntheticPredictor>(ctx);
}

std::unique_ptr<Predictor> FakeZeroBackend::make(
    const WorkerContext& ctx) const {
  (void)ctx;
  return std::make_unique<FakeZeroPredictor>();
}

std::unique_ptr<PredictorFactory> make_backend(const std::string& name) {
  if (name == "synthetic") return std::make_unique<SyntheticBackend>();
  if (name == "fake-zero") return std::make_unique<FakeZeroBackend>();
  throw SpecError("unknown backend '" + name + "'");
}

}  // namespace enserve
