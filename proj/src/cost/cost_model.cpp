#include "enserve/cost/cost_model.hpp"

#include <limits>

#include "enserve/memory/memory_model.hpp"

namespace enserve {

int colocated_count(const AllocationMatrix& A, int device_id) {
  return A.row_worker_count(device_id);
}

double service_time(const WorkerPlacement& placement,
                    const ClusterSpec& cluster) {
  const ModelSpec& model = cluster.models[placement.model_id];
  const DeviceSpec& device = cluster.devices[placement.device_id];
  double shared_rate = device.compute_rate / placement.colocated_count;
  return placement.batch * model.cost_per_sample / shared_rate +
         device.batch_overhead_s;
}

double worker_throughput(const WorkerPlacement& placement,
                         const ClusterSpec& cluster) {
  double t = service_time(placement, cluster);
  if (t <= 0.0) return std::numeric_limits<double>::infinity();
  return placement.batch / t;
}

double predict_ensemble_throughput(const AllocationMatrix& A,
                                   const ClusterSpec& cluster) {
  if (!validate_matrix(A, cluster).ok) return 0.0;
  if (!fit_mem(A, cluster).fits) return 0.0;

  double slowest = std::numeric_limits<double>::infinity();
  for (int m = 0; m < A.model_count(); ++m) {
    double model_rate = 0.0;
    for (int d = 0; d < A.device_count(); ++d) {
      int b = A.at(d, m);
      if (b == 0) continue;
      WorkerPlacement p{m, d, b, colocated_count(A, d)};
      model_rate += worker_throughput(p, cluster);
    }
    slowest = std::min(slowest, model_rate);
  }
  return slowest;
}

}  // namespace enserve
