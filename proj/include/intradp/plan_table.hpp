#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "solver.hpp"

namespace intradp {

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 14695981039346656037ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Plans precomputed per bandwidth bucket; bucket k covers [k*width, (k+1)*width) Mbps.
struct PlanTable {
  double bucket_width_mbps = 1.0;
  double max_mbps = 200.0;
  std::string content_hash;
  std::vector<SchedulePlan> plans;

  std::size_t bucket_count() const {
    return static_cast<std::size_t>(std::floor(max_mbps / bucket_width_mbps)) + 1;
  }

  std::size_t bucket_of(double mbps) const {
    const double b = std::clamp(std::isnan(mbps) ? 0.0 : mbps, 0.0, max_mbps);
    return std::min(static_cast<std::size_t>(std::floor(b / bucket_width_mbps)), plans.size() - 1);
  }

  const SchedulePlan& lookup(double mbps) const { return plans.at(bucket_of(mbps)); }

  double bucket_midpoint(std::size_t k) const { return (static_cast<double>(k) + 0.5) * bucket_width_mbps; }
};

/// Stable digest of everything a plan table depends on.
inline std::string plan_table_hash(const ModelGraph& g, const ProfileTable& prof, const DEConfig& cfg,
                                   double width_mbps, double max_mbps, double latency_s) {
  json key = {{"model", g.document()},
              {"profile", profile_to_json(g, prof)},
              {"de", cfg.to_json()},
              {"bucket_width_mbps", width_mbps},
              {"max_mbps", max_mbps},
              {"latency_s", latency_s}};
  return hex64(fnv1a64(key.dump()));
}

/// Runs the solver at each bucket midpoint (bucket 0 is pinned to the
/// device-only plan). Buckets are independent, so up to `jobs` run at once.
inline PlanTable build_plan_table(const ModelGraph& g, const ProfileTable& prof, double width_mbps,
                                  double max_mbps, const DEConfig& cfg, double latency_s = 0.0,
                                  unsigned jobs = 1) {
  if (!(width_mbps > 0.0)) throw Error(Errc::InvalidArgument, "bucket width must be > 0");
  if (max_mbps < 0.0) throw Error(Errc::InvalidArgument, "max bandwidth must be >= 0");
  PlanTable t;
  t.bucket_width_mbps = width_mbps;
  t.max_mbps = max_mbps;
  t.content_hash = plan_table_hash(g, prof, cfg, width_mbps, max_mbps, latency_s);
  const std::size_t n = t.bucket_count();
  t.plans.resize(n);
  t.plans[0] = plan_device_only(g);
  auto work = [&](std::size_t k) {
    const LinkModel link = LinkModel::from_mbps(t.bucket_midpoint(k), latency_s);
    t.plans[k] = solve_loss(g, prof, link, cfg).plan;
  };
  jobs = std::max(1u, jobs);
  if (jobs == 1) {
    for (std::size_t k = 1; k < n; ++k) work(k);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < jobs; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t k = 1 + w; k < n; k += jobs) work(k);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (std::size_t k = 0; k < n; ++k) t.plans[k].plan_id = static_cast<std::int64_t>(k);
  return t;
}

inline json plan_to_json(const ModelGraph& g, const SchedulePlan& p) {
  json ranges = json::array();
  for (auto i : g.operator_order()) {
    ranges.push_back({{"node", g.node(i).id},
                      {"m", {p.m[i].lo, std::max(p.m[i].lo, p.m[i].hi)}},
                      {"r", {p.r[i].lo, std::max(p.r[i].lo, p.r[i].hi)}}});
  }
  return {{"plan_id", p.plan_id}, {"ranges", ranges}};
}

inline SchedulePlan plan_from_json(const ModelGraph& g, const json& j) {
  if (!j.is_object() || !j.contains("ranges") || !j["ranges"].is_array()) {
    throw Error(Errc::SchemaViolation, "plan entry needs a 'ranges' array");
  }
  SchedulePlan p = SchedulePlan::located(g);
  p.plan_id = j.value("plan_id", std::int64_t{0});
  std::vector<char> seen(g.size(), 0);
  auto read = [](const json& r) {
    if (!r.is_array() || r.size() != 2) throw Error(Errc::SchemaViolation, "range must be [lo, hi)");
    return UnitRange{r[0].get<Units>(), r[1].get<Units>()};
  };
  for (const auto& e : j["ranges"]) {
    const NodeId id = e.at("node").get<NodeId>();
    if (!g.has_node(id)) throw Error(Errc::UnknownNode, "plan names node " + std::to_string(id));
    const auto i = g.index_of(id);
    if (g.node(i).is_virtual) throw Error(Errc::SchemaViolation, "plan must not place virtual vertices");
    p.m[i] = read(e.at("m"));
    p.r[i] = read(e.at("r"));
    seen[i] = 1;
  }
  for (auto i : g.operator_order()) {
    if (!seen[i]) throw Error(Errc::ShapeMismatch, "plan lacks node '" + g.node(i).name + "'");
  }
  return p;
}

inline json plan_table_to_json(const ModelGraph& g, const PlanTable& t) {
  json plans = json::array();
  for (const auto& p : t.plans) plans.push_back(plan_to_json(g, p));
  return {{"bucket_width_mbps", t.bucket_width_mbps},
          {"max_mbps", t.max_mbps},
          {"content_hash", t.content_hash},
          {"plans", plans}};
}

inline PlanTable plan_table_from_json(const ModelGraph& g, const json& j) {
  if (!j.is_object()) throw Error(Errc::SchemaViolation, "plan table is not an object");
  for (const char* key : {"bucket_width_mbps", "max_mbps", "content_hash", "plans"}) {
    if (!j.contains(key)) throw Error(Errc::SchemaViolation, std::string("plan table lacks '") + key + "'");
  }
  PlanTable t;
  t.bucket_width_mbps = j["bucket_width_mbps"].get<double>();
  t.max_mbps = j["max_mbps"].get<double>();
  t.content_hash = j["content_hash"].get<std::string>();
  if (!(t.bucket_width_mbps > 0.0)) throw Error(Errc::SchemaViolation, "bucket width must be > 0");
  for (const auto& jp : j["plans"]) t.plans.push_back(plan_from_json(g, jp));
  if (t.plans.empty()) throw Error(Errc::SchemaViolation, "plan table has no plans");
  return t;
}

}  // namespace intradp
