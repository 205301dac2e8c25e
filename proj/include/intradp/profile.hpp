#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <utility>
#include <vector>

#include "graph.hpp"

namespace intradp {

enum class Device : int { M = 0, R = 1 };

constexpr Device other(Device d) { return d == Device::M ? Device::R : Device::M; }
constexpr std::size_t idx(Device d) { return static_cast<std::size_t>(d); }
constexpr std::string_view to_string(Device d) { return d == Device::M ? "M" : "R"; }

struct DeviceCost {
  double overhead_s = 0.0;
  double per_unit_s = 0.0;
  friend bool operator==(const DeviceCost&, const DeviceCost&) = default;
};

/// Affine compute-cost coefficients per operator and device, plus the byte
/// size of one output unit of `u` as consumed along each edge (u, v).
struct ProfileTable {
  std::vector<std::array<DeviceCost, 2>> costs;  // by dense node index
  std::map<std::pair<std::size_t, std::size_t>, double> edge_bytes;

  const DeviceCost& cost(Device d, std::size_t v) const {
    if (v >= costs.size()) throw Error(Errc::UnknownNode, "no profile entry for node index " + std::to_string(v));
    return costs[v][idx(d)];
  }

  double bytes_per_unit(std::size_t u, std::size_t v) const {
    auto it = edge_bytes.find({u, v});
    if (it == edge_bytes.end()) {
      throw Error(Errc::UnknownNode, "no byte size for edge (" + std::to_string(u) + "," +
                                         std::to_string(v) + ")");
    }
    return it->second;
  }

  friend bool operator==(const ProfileTable&, const ProfileTable&) = default;
};

struct LinkModel {
  double bandwidth_bps = 0.0;
  double per_message_latency = 0.0;

  static LinkModel from_mbps(double mbps, double latency_s = 0.0) {
    return {mbps * 1e6, latency_s};
  }
};

/// C_M(v) / C_R(v): zero for an empty batch or a virtual vertex.
inline double compute_time(const ProfileTable& p, const ModelGraph& g, Device d, std::size_t v,
                           Units count) {
  if (v >= g.size()) throw Error(Errc::UnknownNode, "node index " + std::to_string(v));
  if (count < 0 || count > g.node(v).out_units) {
    throw Error(Errc::RangeOutOfBounds, "unit count outside node '" + g.node(v).name + "'");
  }
  if (count == 0 || g.node(v).is_virtual) return 0.0;
  const DeviceCost& c = p.cost(d, v);
  return c.overhead_s + c.per_unit_s * static_cast<double>(count);
}

inline double tx_time(const LinkModel& link, double bytes) {
  if (bytes <= 0.0) return 0.0;
  if (link.bandwidth_bps <= 0.0) return std::numeric_limits<double>::infinity();
  return link.per_message_latency + 8.0 * bytes / link.bandwidth_bps;
}

/// Fills edge byte sizes with the producer's per-unit output size.
inline void default_edge_bytes(const ModelGraph& g, ProfileTable& p) {
  for (const auto& [u, v] : g.edges()) {
    p.edge_bytes.try_emplace({u, v}, g.node(u).out_bytes_per_unit);
  }
}

struct SynthParams {
  double speed_ratio = 20.0;         // server per-unit cost = device cost / ratio
  double device_work_per_s = 1.0e9;  // device throughput in work units per second
  double overhead_min_s = 2.0e-4;
  double overhead_max_s = 6.0e-4;
  double jitter = 0.1;               // relative +/- noise on per-unit cost
};

/// Deterministic stand-in for on-device profiling. Per-unit work comes from a
/// node's "work_per_unit" document field when present, else its output bytes.
inline ProfileTable synth_profile(const ModelGraph& g, const SynthParams& params, std::uint64_t seed) {
  if (params.speed_ratio <= 0 || params.device_work_per_s <= 0 ||
      params.overhead_min_s < 0 || params.overhead_max_s < params.overhead_min_s ||
      params.jitter < 0 || params.jitter >= 1) {
    throw Error(Errc::InvalidArgument, "synthetic profile parameters out of range");
  }
  std::map<NodeId, double> work;
  for (const auto& jn : g.document()["nodes"]) {
    if (jn.contains("work_per_unit")) work[jn["id"].get<NodeId>()] = jn["work_per_unit"].get<double>();
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ProfileTable p;
  p.costs.assign(g.size(), {});
  for (std::size_t i = 0; i < g.size(); ++i) {
    const OperatorNode& v = g.node(i);
    if (v.is_virtual) continue;
    const double w = work.count(v.id) ? work[v.id] : v.out_bytes_per_unit;
    const double noise = 1.0 + params.jitter * (2.0 * unit(rng) - 1.0);
    const double overhead =
        params.overhead_min_s + (params.overhead_max_s - params.overhead_min_s) * unit(rng);
    DeviceCost m{overhead, w / params.device_work_per_s * noise};
    DeviceCost r{m.overhead_s / params.speed_ratio, m.per_unit_s / params.speed_ratio};
    p.costs[i] = {m, r};
  }
  default_edge_bytes(g, p);
  return p;
}

inline json profile_to_json(const ModelGraph& g, const ProfileTable& p) {
  json nodes = json::array();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.node(i).is_virtual) continue;
    const auto& c = p.costs.at(i);
    nodes.push_back({{"id", g.node(i).id},
                     {"m", {{"overhead_s", c[0].overhead_s}, {"per_unit_s", c[0].per_unit_s}}},
                     {"r", {{"overhead_s", c[1].overhead_s}, {"per_unit_s", c[1].per_unit_s}}}});
  }
  json edges = json::array();
  for (const auto& [u, v] : g.edges()) {
    edges.push_back({{"u", g.node(u).id}, {"v", g.node(v).id}, {"bytes_per_unit", p.bytes_per_unit(u, v)}});
  }
  return {{"nodes", nodes}, {"edges", edges}};
}

inline ProfileTable profile_from_json(const ModelGraph& g, const json& doc) {
  if (!doc.is_object() || !doc.contains("nodes") || !doc["nodes"].is_array()) {
    throw Error(Errc::SchemaViolation, "profile document needs a 'nodes' array");
  }
  auto read_cost = [](const json& j, const std::string& where) {
    if (!j.is_object() || !j.contains("overhead_s") || !j.contains("per_unit_s")) {
      throw Error(Errc::SchemaViolation, where + ": needs overhead_s and per_unit_s");
    }
    DeviceCost c{j["overhead_s"].get<double>(), j["per_unit_s"].get<double>()};
    if (c.overhead_s < 0 || c.per_unit_s < 0) {
      throw Error(Errc::SchemaViolation, where + ": negative coefficient");
    }
    return c;
  };
  ProfileTable p;
  p.costs.assign(g.size(), {});
  std::vector<char> seen(g.size(), 0);
  for (const auto& jn : doc["nodes"]) {
    const NodeId id = jn.at("id").get<NodeId>();
    if (!g.has_node(id)) throw Error(Errc::UnknownNode, "profile names node " + std::to_string(id));
    const auto i = g.index_of(id);
    const std::string where = "profile node " + std::to_string(id);
    if (!jn.contains("m") || !jn.contains("r")) {
      throw Error(Errc::SchemaViolation, where + ": needs both 'm' and 'r' entries");
    }
    p.costs[i] = {read_cost(jn["m"], where + ".m"), read_cost(jn["r"], where + ".r")};
    seen[i] = 1;
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!g.node(i).is_virtual && !seen[i]) {
      throw Error(Errc::SchemaViolation, "profile lacks node '" + g.node(i).name + "'");
    }
  }
  if (doc.contains("edges")) {
    for (const auto& je : doc["edges"]) {
      const NodeId u = je.at("u").get<NodeId>(), v = je.at("v").get<NodeId>();
      if (!g.has_node(u) || !g.has_node(v)) {
        throw Error(Errc::DanglingEdge, "profile edge (" + std::to_string(u) + "," + std::to_string(v) + ")");
      }
      const double b = je.at("bytes_per_unit").get<double>();
      if (b < 0) throw Error(Errc::SchemaViolation, "negative bytes_per_unit");
      p.edge_bytes[{g.index_of(u), g.index_of(v)}] = b;
    }
  }
  default_edge_bytes(g, p);
  return p;
}

}  // namespace intradp
