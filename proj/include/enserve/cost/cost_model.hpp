#pragma once

#include "enserve/core/types.hpp"

namespace enserve {

// One nonzero cell of an allocation matrix.
struct WorkerPlacement {
  int model_id = 0;
  int device_id = 0;
  int batch = 1;
  int colocated_count = 1;  // nonzero entries on the device row, >= 1
};

// Seconds to dispatch one batch: b*c / (R/n) + o. Device compute is shared
// equally among the n co-located workers; o is the fixed dispatch overhead.
double service_time(const WorkerPlacement& placement,
                    const ClusterSpec& cluster);

// batch / service_time, in samples per second. A zero service time (free
// model, no overhead) reports +infinity.
double worker_throughput(const WorkerPlacement& placement,
                         const ClusterSpec& cluster);

// Analytic throughput of the whole ensemble under A: the slowest model
// bounds it, and a model's data-parallel workers add up. Returns 0 when A
// fails validation or does not fit in memory, mirroring the bench contract.
double predict_ensemble_throughput(const AllocationMatrix& A,
                                   const ClusterSpec& cluster);

// colocated_count for every worker on device d under A.
int colocated_count(const AllocationMatrix& A, int device_id);

}  // namespace enserve
