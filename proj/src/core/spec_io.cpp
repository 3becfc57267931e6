#include "enserve/core/spec_io.hpp"

#include <fstream>

namespace enserve {

json cluster_to_json(const ClusterSpec& cluster) {
  json doc;
  doc["devices"] = json::array();
  for (const DeviceSpec& d : cluster.devices) {
    doc["devices"].push_back({{"id", d.id},
                              {"kind", to_string(d.kind)},
                              {"memory_mib", d.memory_mib},
                              {"compute_rate", d.compute_rate},
                              {"batch_overhead_s", d.batch_overhead_s}});
  }
  doc["models"] = json::array();
  for (const ModelSpec& m : cluster.models) {
    doc["models"].push_back({{"id", m.id},
                             {"name", m.name},
                             {"weight_mib", m.weight_mib},
                             {"act_mib_per_sample", m.act_mib_per_sample},
                             {"cost_per_sample", m.cost_per_sample},
                             {"output_width", m.output_width}});
  }
  doc["batch_menu"] = cluster.batch_menu;
  doc["segment_size"] = cluster.segment_size;
  return doc;
}

namespace {

template <typename T>
T require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw SpecError(where + ": missing key '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw SpecError(where + ": bad value for '" + key + "': " + e.what());
  }
}

}  // namespace

ClusterSpec cluster_from_json(const json& doc) {
  if (!doc.is_object()) throw SpecError("spec document must be a JSON object");
  ClusterSpec cluster;
  if (doc.contains("devices")) {
    for (const json& jd : doc.at("devices")) {
      DeviceSpec d;
      d.id = require<int>(jd, "id", "device");
      d.kind = device_kind_from_string(require<std::string>(jd, "kind", "device"));
      d.memory_mib = require<double>(jd, "memory_mib", "device");
      d.compute_rate = require<double>(jd, "compute_rate", "device");
      d.batch_overhead_s = jd.value("batch_overhead_s", 0.0);
      cluster.devices.push_back(d);
    }
  }
  if (doc.contains("models")) {
    for (const json& jm : doc.at("models")) {
      ModelSpec m;
      m.id = require<int>(jm, "id", "model");
      m.name = require<std::string>(jm, "name", "model");
      m.weight_mib = require<double>(jm, "weight_mib", "model");
      m.act_mib_per_sample = jm.value("act_mib_per_sample", 0.0);
      m.cost_per_sample = require<double>(jm, "cost_per_sample", "model");
      m.output_width = require<int>(jm, "output_width", "model");
      cluster.models.push_back(m);
    }
  }
  if (doc.contains("batch_menu"))
    cluster.batch_menu = doc.at("batch_menu").get<std::vector<int>>();
  if (doc.contains("segment_size"))
    cluster.segment_size = doc.at("segment_size").get<int>();
  cluster.validate();
  return cluster;
}

ClusterSpec cluster_from_documents(const json& base, const json& overlay) {
  json merged = base;
  if (!overlay.is_null()) {
    for (auto it = overlay.begin(); it != overlay.end(); ++it)
      merged[it.key()] = it.value();
  }
  return cluster_from_json(merged);
}

json matrix_to_json(const AllocationMatrix& A, const ClusterSpec& cluster) {
  json doc;
  doc["devices"] = json::array();
  for (const DeviceSpec& d : cluster.devices) doc["devices"].push_back(d.label());
  doc["models"] = json::array();
  for (const ModelSpec& m : cluster.models) doc["models"].push_back(m.name);
  json entries = json::array();
  for (int d = 0; d < A.device_count(); ++d) {
    json row = json::array();
    for (int m = 0; m < A.model_count(); ++m) row.push_back(A.at(d, m));
    entries.push_back(row);
  }
  doc["entries"] = entries;
  return doc;
}

AllocationMatrix matrix_from_json(const json& doc, const ClusterSpec& cluster) {
  const json& entries = doc.at("entries");
  if (static_cast<int>(entries.size()) != cluster.device_count())
    throw SpecError("matrix has " + std::to_string(entries.size()) +
                    " rows, cluster has " +
                    std::to_string(cluster.device_count()) + " devices");
  if (doc.contains("models")) {
    const json& names = doc.at("models");
    if (static_cast<int>(names.size()) != cluster.model_count())
      throw SpecError("matrix model list does not match the cluster");
    for (int m = 0; m < cluster.model_count(); ++m) {
      if (names[m].get<std::string>() != cluster.models[m].name)
        throw SpecError("matrix column " + std::to_string(m) + " is '" +
                        names[m].get<std::string>() + "', cluster has '" +
                        cluster.models[m].name + "'");
    }
  }
  AllocationMatrix A(cluster.device_count(), cluster.model_count());
  for (int d = 0; d < cluster.device_count(); ++d) {
    const json& row = entries[d];
    if (static_cast<int>(row.size()) != cluster.model_count())
      throw SpecError("matrix row " + std::to_string(d) + " has " +
                      std::to_string(row.size()) + " entries, expected " +
                      std::to_string(cluster.model_count()));
    for (int m = 0; m < cluster.model_count(); ++m)
      A.set(d, m, row[m].get<int>());
  }
  return A;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw SpecError(path + ": " + e.what());
  }
}

void save_json_file(const std::string& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw SpecError("cannot write " + path);
  out << doc.dump(2) << "\n";
}

}  // namespace enserve
