#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "enserve/core/errors.hpp"

namespace enserve {

enum class DeviceKind { CPU, GPU };

std::string to_string(DeviceKind kind);
DeviceKind device_kind_from_string(const std::string& s);

struct DeviceSpec {
  int id = 0;                   // ordinal index within ClusterSpec::devices
  DeviceKind kind = DeviceKind::GPU;
  double memory_mib = 0.0;      // capacity, > 0
  double compute_rate = 0.0;    // work-units per second, > 0
  double batch_overhead_s = 0.0;// fixed seconds per batch dispatch, >= 0

  // Human-readable label used in matrix documents, e.g. "cpu0", "gpu1".
  std::string label() const;
};

struct ModelSpec {
  int id = 0;                   // ordinal index within ClusterSpec::models
  std::string name;
  double weight_mib = 0.0;          // > 0
  double act_mib_per_sample = 0.0;  // >= 0
  double cost_per_sample = 0.0;     // work-units, > 0
  int output_width = 1;             // C, >= 1
};

// The hardware/ensemble universe every other component works against.
struct ClusterSpec {
  std::vector<DeviceSpec> devices;
  std::vector<ModelSpec> models;
  std::vector<int> batch_menu;  // nonempty, strictly ascending, all > 0
  int segment_size = 128;       // N

  int device_count() const { return static_cast<int>(devices.size()); }
  int model_count() const { return static_cast<int>(models.size()); }
  bool menu_contains(int batch) const;
  int min_batch() const;

  // Throws SpecError on any violated field invariant. A segment size below
  // max(batch_menu) is allowed but reported through `warnings`.
  void validate(std::vector<std::string>* warnings = nullptr) const;
};

// Device-by-model grid of batch sizes; 0 means no worker for that pair.
class AllocationMatrix {
 public:
  AllocationMatrix() = default;
  AllocationMatrix(int device_count, int model_count)
      : devices_(device_count),
        models_(model_count),
        cells_(static_cast<std::size_t>(device_count) * model_count, 0) {}

  int device_count() const { return devices_; }
  int model_count() const { return models_; }

  int at(int d, int m) const { return cells_[index(d, m)]; }
  void set(int d, int m, int batch) { cells_[index(d, m)] = batch; }

  int worker_count() const;
  int row_worker_count(int d) const;     // nonzero entries on device d
  int column_worker_count(int m) const;  // nonzero entries for model m

  // >= 2 workers of one model across devices.
  bool is_data_parallel(int m) const { return column_worker_count(m) >= 2; }
  // >= 2 workers sharing one device.
  bool is_colocated(int d) const { return row_worker_count(d) >= 2; }

  bool operator==(const AllocationMatrix& other) const = default;

 private:
  std::size_t index(int d, int m) const {
    return static_cast<std::size_t>(d) * models_ + m;
  }

  int devices_ = 0;
  int models_ = 0;
  std::vector<int> cells_;
};

struct Segment {
  int id = 0;
  std::size_t start = 0;  // inclusive sample index
  std::size_t end = 0;    // exclusive

  std::size_t size() const { return end - start; }
};

struct MatrixViolation {
  enum class Kind { EntryNotInMenu, EmptyColumn };
  Kind kind;
  int device = -1;  // valid for EntryNotInMenu
  int model = -1;
  int value = 0;    // offending entry value

  std::string describe() const;
};

struct MatrixValidation {
  bool ok = false;
  std::vector<MatrixViolation> violations;
};

// Checks menu membership of every nonzero entry and that no model column is
// all-zero. Throws SpecError when A's dimensions do not match the cluster.
MatrixValidation validate_matrix(const AllocationMatrix& A,
                                 const ClusterSpec& cluster);

// ceil(nb_samples / segment_size); 0 when nb_samples == 0.
std::size_t num_segments(std::size_t nb_samples, int segment_size);

// [s*N, min((s+1)*N, nb_samples)). Throws std::out_of_range when the segment
// starts at or past nb_samples.
Segment segment_bounds(int segment_id, int segment_size,
                       std::size_t nb_samples);

}  // namespace enserve
