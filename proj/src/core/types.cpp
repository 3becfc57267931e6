#include "enserve/core/types.hpp"

#include <algorithm>
#include <stdexcept>

namespace enserve {

std::string to_string(DeviceKind kind) {
  return kind == DeviceKind::CPU ? "CPU" : "GPU";
}

DeviceKind device_kind_from_string(const std::string& s) {
  if (s == "CPU" || s == "cpu") return DeviceKind::CPU;
  if (s == "GPU" || s == "gpu") return DeviceKind::GPU;
  throw SpecError("unknown device kind: '" + s + "'");
}

std::string DeviceSpec::label() const {
  return (kind == DeviceKind::CPU ? "cpu" : "gpu") + std::to_string(id);
}

bool ClusterSpec::menu_contains(int batch) const {
  return std::binary_search(batch_menu.begin(), batch_menu.end(), batch);
}

int ClusterSpec::min_batch() const {
  if (batch_menu.empty()) throw SpecError("batch menu is empty");
  return batch_menu.front();
}

void ClusterSpec::validate(std::vector<std::string>* warnings) const {
  if (devices.empty()) throw SpecError("cluster has no devices");
  if (models.empty()) throw SpecError("cluster has no models");
  for (std::size_t i = 0; i < devices.size(); ++i) {
    const DeviceSpec& d = devices[i];
    if (d.id != static_cast<int>(i))
      throw SpecError("device id " + std::to_string(d.id) +
                      " is not its ordinal index " + std::to_string(i));
    if (d.memory_mib <= 0)
      throw SpecError(d.label() + ": memory_mib must be > 0");
    if (d.compute_rate <= 0)
      throw SpecError(d.label() + ": compute_rate must be > 0");
    if (d.batch_overhead_s < 0)
      throw SpecError(d.label() + ": batch_overhead_s must be >= 0");
  }
  for (std::size_t i = 0; i < models.size(); ++i) {
    const ModelSpec& m = models[i];
    if (m.id != static_cast<int>(i))
      throw SpecError("model id " + std::to_string(m.id) +
                      " is not its ordinal index " + std::to_string(i));
    if (m.name.empty())
      throw SpecError("model " + std::to_string(i) + " has no name");
    if (m.weight_mib <= 0)
      throw SpecError(m.name + ": weight_mib must be > 0");
    if (m.act_mib_per_sample < 0)
      throw SpecError(m.name + ": act_mib_per_sample must be >= 0");
    if (m.cost_per_sample <= 0)
      throw SpecError(m.name + ": cost_per_sample must be > 0");
    if (m.output_width < 1)
      throw SpecError(m.name + ": output_width must be >= 1");
  }
  if (batch_menu.empty()) throw SpecError("batch menu is empty");
  for (std::size_t i = 0; i < batch_menu.size(); ++i) {
    if (batch_menu[i] <= 0) throw SpecError("batch menu values must be > 0");
    if (i > 0 && batch_menu[i] <= batch_menu[i - 1])
      throw SpecError("batch menu must be strictly ascending");
  }
  if (segment_size < 1) throw SpecError("segment_size must be >= 1");
  if (warnings != nullptr && segment_size < batch_menu.back()) {
    warnings->push_back("segment_size " + std::to_string(segment_size) +
                        " is below the largest batch size " +
                        std::to_string(batch_menu.back()));
  }
}

int AllocationMatrix::worker_count() const {
  return static_cast<int>(
      std::count_if(cells_.begin(), cells_.end(), [](int b) { return b > 0; }));
}

int AllocationMatrix::row_worker_count(int d) const {
  int n = 0;
  for (int m = 0; m < models_; ++m)
    if (at(d, m) > 0) ++n;
  return n;
}

int AllocationMatrix::column_worker_count(int m) const {
  int n = 0;
  for (int d = 0; d < devices_; ++d)
    if (at(d, m) > 0) ++n;
  return n;
}

std::string MatrixViolation::describe() const {
  if (kind == Kind::EmptyColumn)
    return "model " + std::to_string(model) + " has no worker";
  return "entry [" + std::to_string(device) + "][" + std::to_string(model) +
         "] = " + std::to_string(value) + " is not in the batch menu";
}

MatrixValidation validate_matrix(const AllocationMatrix& A,
                                 const ClusterSpec& cluster) {
  if (A.device_count() != cluster.device_count() ||
      A.model_count() != cluster.model_count()) {
    throw SpecError("matrix is " + std::to_string(A.device_count()) + "x" +
                    std::to_string(A.model_count()) + " but cluster has " +
                    std::to_string(cluster.device_count()) + " devices and " +
                    std::to_string(cluster.model_count()) + " models");
  }
  MatrixValidation out;
  for (int d = 0; d < A.device_count(); ++d) {
    for (int m = 0; m < A.model_count(); ++m) {
      int b = A.at(d, m);
      if (b != 0 && !cluster.menu_contains(b)) {
        out.violations.push_back(
            {MatrixViolation::Kind::EntryNotInMenu, d, m, b});
      }
    }
  }
  for (int m = 0; m < A.model_count(); ++m) {
    if (A.column_worker_count(m) == 0)
      out.violations.push_back({MatrixViolation::Kind::EmptyColumn, -1, m, 0});
  }
  out.ok = out.violations.empty();
  return out;
}

std::size_t num_segments(std::size_t nb_samples, int segment_size) {
  if (segment_size < 1) throw std::invalid_argument("segment_size must be >= 1");
  if (nb_samples == 0) return 0;
  std::size_t n = static_cast<std::size_t>(segment_size);
  return (nb_samples + n - 1) / n;
}

Segment segment_bounds(int segment_id, int segment_size,
                       std::size_t nb_samples) {
  if (segment_id < 0) throw std::invalid_argument("segment id must be >= 0");
  if (segment_size < 1) throw std::invalid_argument("segment_size must be >= 1");
  std::size_t start =
      static_cast<std::size_t>(segment_id) * static_cast<std::size_t>(segment_size);
  if (start >= nb_samples)
    throw std::out_of_range("segment " + std::to_string(segment_id) +
                            " starts past the " + std::to_string(nb_samples) +
                            " available samples");
  std::size_t end = std::min(start + static_cast<std::size_t>(segment_size),
                             nb_samples);
  return Segment{segment_id, start, end};
}

}  // namespace enserve
