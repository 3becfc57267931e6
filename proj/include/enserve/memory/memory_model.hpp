#pragma once

#include <optional>
#include <vector>

#include "enserve/core/types.hpp"

namespace enserve {

struct DeviceLoad {
  int device_id = 0;
  double used_mib = 0.0;
  double capacity_mib = 0.0;

  double remaining_mib() const { return capacity_mib - used_mib; }
};

struct MemoryReport {
  std::vector<DeviceLoad> per_device;
  bool fits = false;  // true iff used <= capacity on every device
};

// Footprint of one worker: weights plus batch-scaled activations.
double worker_memory(const ModelSpec& model, int batch);

// Sum of worker footprints on device d; 0 for an empty row.
double device_load(const AllocationMatrix& A, int device_id,
                   const ClusterSpec& cluster);

// Feasibility of A in terms of memory. Partial matrices (zero columns) are
// fine here; the placement algorithm calls this on work in progress.
MemoryReport fit_mem(const AllocationMatrix& A, const ClusterSpec& cluster);

// Device of `kind` with the most remaining memory under A, lowest id on
// ties; nullopt when the cluster has no device of that kind. The batch
// argument mirrors the placement routine's signature; ranking by remaining
// memory does not depend on it.
std::optional<int> more_remaining_memory(const AllocationMatrix& A,
                                         int default_batch, DeviceKind kind,
                                         const ClusterSpec& cluster);

}  // namespace enserve
