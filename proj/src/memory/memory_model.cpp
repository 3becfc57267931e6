#include "enserve/memory/memory_model.hpp"

#include <stdexcept>

namespace enserve {

double worker_memory(const ModelSpec& model, int batch) {
  if (batch < 1) throw std::invalid_argument("batch must be >= 1");
  return model.weight_mib + batch * model.act_mib_per_sample;
}

double device_load(const AllocationMatrix& A, int device_id,
                   const ClusterSpec& cluster) {
  double used = 0.0;
  for (int m = 0; m < A.model_count(); ++m) {
    int b = A.at(device_id, m);
    if (b > 0) used += worker_memory(cluster.models[m], b);
  }
  return used;
}

MemoryReport fit_mem(const AllocationMatrix& A, const ClusterSpec& cluster) {
  MemoryReport report;
  report.fits = true;
  for (int d = 0; d < cluster.device_count(); ++d) {
    double used = device_load(A, d, cluster);
    double cap = cluster.devices[d].memory_mib;
    report.per_device.push_back({d, used, cap});
    if (used > cap) report.fits = false;
  }
  return report;
}

std::optional<int> more_remaining_memory(const AllocationMatrix& A,
                                         int /*default_batch*/,
                                         DeviceKind kind,
                                         const ClusterSpec& cluster) {
  std::optional<int> best;
  double best_remaining = 0.0;
  for (int d = 0; d < cluster.device_count(); ++d) {
    if (cluster.devices[d].kind != kind) continue;
    double remaining =
        cluster.devices[d].memory_mib - device_load(A, d, cluster);
    if (!best || remaining > best_remaining) {
      best = d;
      best_remaining = remaining;
    }
  }
  return best;
}

}  // namespace enserve
