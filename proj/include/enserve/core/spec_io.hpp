#pragma once

#include <string>

#include <json.hpp>

#include "enserve/core/types.hpp"

namespace enserve {

using json = nlohmann::json;

// Spec documents hold up to four top-level keys: `devices`, `models`,
// `batch_menu`, `segment_size`. A cluster file and an ensemble file may be
// split (devices in one, models in the other) and merged at load time.
json cluster_to_json(const ClusterSpec& cluster);
ClusterSpec cluster_from_json(const json& doc);

// Merges the keys of `overlay` into `base` (overlay wins) and parses the
// result. Used to combine a --cluster file with a --ensemble file.
ClusterSpec cluster_from_documents(const json& base, const json& overlay);

json matrix_to_json(const AllocationMatrix& A, const ClusterSpec& cluster);
// Checks the document's shape and row labels against the cluster.
AllocationMatrix matrix_from_json(const json& doc, const ClusterSpec& cluster);

json load_json_file(const std::string& path);
void save_json_file(const std::string& path, const json& doc);

}  // namespace enserve
