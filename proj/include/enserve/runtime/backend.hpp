#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>

#include "enserve/core/types.hpp"
#include "enserve/runtime/message.hpp"

namespace enserve {

// Everything a backend may need to stand up one worker. device_load_mib is
// the total footprint the allocation puts on this worker's device, so a
// synthetic backend can refuse exactly when the placement overcommits it.
struct WorkerContext {
  ModelSpec model;
  DeviceSpec device;
  int batch = 1;
  int colocated_count = 1;
  double device_load_mib = 0.0;
};

// One model instance pinned to one device.
class Predictor {
 public:
  virtual ~Predictor() = default;

  // Persists the model into device memory. false means out of memory.
  virtual bool load() = 0;

  // Fills `out` (in.rows * model output width values, row-major).
  virtual void predict(const SampleView& in, std::span<float> out) = 0;
};

class PredictorFactory {
 public:
  virtual ~PredictorFactory() = default;
  virtual std::unique_ptr<Predictor> make(const WorkerContext& ctx) const = 0;
  virtual std::string name() const = 0;
};

// Pure function of (model, sample, class), uniform in [0, 1). Keyed on the
// absolute sample index so the ensemble output is identical no matter how
// segments land on workers.
float synthetic_prediction(int model_id, std::size_t sample_index,
                           int class_index);

// Sleeps the cost model's service time per batch and emits hash-derived
// values; load() fails when the device row's footprint exceeds its capacity.
class SyntheticBackend : public PredictorFactory {
 public:
  std::unique_ptr<Predictor> make(const WorkerContext& ctx) const override;
  std::string name() const override { return "synthetic"; }
};

// No sleep, all-zero output; measures pure pipeline overhead.
class FakeZeroBackend : public PredictorFactory {
 public:
  std::unique_ptr<Predictor> make(const WorkerContext& ctx) const override;
  std::string name() const override { return "fake-zero"; }
};

std::unique_ptr<PredictorFactory> make_backend(const std::string& name);

}  // namespace enserve
