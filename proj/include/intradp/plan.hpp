#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "graph.hpp"
#include "profile.hpp"

namespace intradp {

/// Per-operator unit ranges for the device (M) and the server (R).
struct SchedulePlan {
  std::int64_t plan_id = 0;
  std::vector<UnitRange> m;  // by dense node index
  std::vector<UnitRange> r;

  const UnitRange& range(Device d, std::size_t v) const { return d == Device::M ? m[v] : r[v]; }
  UnitRange& range(Device d, std::size_t v) { return d == Device::M ? m[v] : r[v]; }

  friend bool operator==(const SchedulePlan& a, const SchedulePlan& b) {
    return a.m == b.m && a.r == b.r;
  }

  /// Builds a plan in prefix/suffix form: x_M(v) = [0, a_v), x_R(v) = [b_v, n_v).
  /// `a` and `b` are indexed like `ModelGraph::operator_order()`.
  static SchedulePlan from_splits(const ModelGraph& g, std::span<const Units> a, std::span<const Units> b) {
    const auto ops = g.operator_order();
    if (a.size() != ops.size() || b.size() != ops.size()) {
      throw Error(Errc::ShapeMismatch, "split vectors do not match the operator count");
    }
    SchedulePlan p = located(g);
    for (std::size_t k = 0; k < ops.size(); ++k) {
      const Units n = g.node(ops[k]).out_units;
      p.m[ops[k]] = {0, a[k]};
      p.r[ops[k]] = {b[k], n};
      if (b[k] >= n) p.r[ops[k]] = {n, n};
    }
    return p;
  }

  /// Empty plan with only the virtual endpoints placed on M.
  static SchedulePlan located(const ModelGraph& g) {
    SchedulePlan p;
    p.m.assign(g.size(), {});
    p.r.assign(g.size(), {});
    for (auto i : {g.input_index(), g.output_index()}) p.m[i] = g.node(i).full_out();
    return p;
  }
};

inline SchedulePlan plan_device_only(const ModelGraph& g) {
  SchedulePlan p = SchedulePlan::located(g);
  for (std::size_t i = 0; i < g.size(); ++i) p.m[i] = g.node(i).full_out();
  return p;
}

inline SchedulePlan plan_server_only(const ModelGraph& g) {
  SchedulePlan p = SchedulePlan::located(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!g.node(i).is_virtual) p.r[i] = g.node(i).full_out();
  }
  return p;
}

/// Operators 1..split (in topological order) on M, the rest on R.
inline SchedulePlan plan_layer_split(const ModelGraph& g, std::size_t split) {
  const auto ops = g.operator_order();
  if (split > ops.size()) throw Error(Errc::RangeOutOfBounds, "split index beyond operator count");
  SchedulePlan p = SchedulePlan::located(g);
  for (std::size_t k = 0; k < ops.size(); ++k) {
    (k < split ? p.m : p.r)[ops[k]] = g.node(ops[k]).full_out();
  }
  return p;
}

/// Splits operator `ops[t]` at unit `k` (M takes [0,k), R the rest) and pulls
/// the split back through its ancestors by halo, so each device computes
/// upstream exactly what its own share needs. Later operators run on R.
inline SchedulePlan plan_row_split(const ModelGraph& g, std::size_t t, Units k) {
  const auto ops = g.operator_order();
  if (t >= ops.size()) throw Error(Errc::RangeOutOfBounds, "split operator beyond operator count");
  SchedulePlan p = SchedulePlan::located(g);
  for (std::size_t j = t + 1; j < ops.size(); ++j) p.r[ops[j]] = g.node(ops[j]).full_out();
  const Units n_t = g.node(ops[t]).out_units;
  k = std::clamp<Units>(k, 0, n_t);
  p.m[ops[t]] = {0, k};
  p.r[ops[t]] = {k, n_t};
  for (std::size_t j = t; j-- > 0;) {
    const std::size_t u = ops[j];
    const Units n = g.node(u).out_units;
    Units a = 0, b = n;
    for (auto c : g.children(u)) {
      const UnitRange need_m = g.needed_from_parent(u, c, p.m[c]);
      const UnitRange need_r = g.needed_from_parent(u, c, p.r[c]);
      if (!need_m.empty()) a = std::max(a, need_m.hi);
      if (!need_r.empty()) b = std::min(b, need_r.lo);
    }
    b = std::min(b, a);
    p.m[u] = {0, a};
    p.r[u] = {b, n};
  }
  return p;
}

enum class ViolationKind { Shape, Coverage, Location, Orientation, Oversize };

constexpr std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::Shape: return "shape";
    case ViolationKind::Coverage: return "coverage";
    case ViolationKind::Location: return "location";
    case ViolationKind::Orientation: return "orientation";
    case ViolationKind::Oversize: return "oversize-transfer";
  }
  return "?";
}

struct Violation {
  ViolationKind kind;
  std::size_t node;
  std::optional<std::size_t> parent;
  std::string detail;
};

struct Feasibility {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::size_t count(ViolationKind k) const {
    return static_cast<std::size_t>(std::count_if(violations.begin(), violations.end(),
                                                  [k](const Violation& v) { return v.kind == k; }));
  }
  std::string describe() const {
    std::ostringstream os;
    for (const auto& v : violations) os << to_string(v.kind) << ": " << v.detail << "\n";
    return os.str();
  }
};

namespace detail {

inline void check_shape(const ModelGraph& g, const SchedulePlan& p) {
  if (p.m.size() != g.size() || p.r.size() != g.size()) {
    throw Error(Errc::ShapeMismatch, "plan covers " + std::to_string(p.m.size()) + " nodes, graph has " +
                                         std::to_string(g.size()));
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (const auto* r : {&p.m[i], &p.r[i]}) {
      if (!r->empty() && (r->lo < 0 || r->hi > g.node(i).out_units)) {
        throw Error(Errc::ShapeMismatch, "range outside node '" + g.node(i).name + "'");
      }
    }
  }
}

}  // namespace detail

/// Lists every violated scheduling constraint.
inline Feasibility is_feasible(const ModelGraph& g, const SchedulePlan& p) {
  detail::check_shape(g, p);
  Feasibility f;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const OperatorNode& v = g.node(i);
    const UnitRange& m = p.m[i];
    const UnitRange& r = p.r[i];
    if (v.is_virtual) {
      if (!(m == v.full_out()) || !r.empty()) {
        f.violations.push_back({ViolationKind::Location, i, {}, "'" + v.name + "' must live entirely on M"});
      }
      continue;
    }
    if (!m.empty() && m.lo != 0) {
      f.violations.push_back({ViolationKind::Orientation, i, {}, "'" + v.name + "' device range is not a prefix"});
    }
    if (!r.empty() && r.hi != v.out_units) {
      f.violations.push_back({ViolationKind::Orientation, i, {}, "'" + v.name + "' server range is not a suffix"});
    }
    // Coverage of [0, n) by two intervals.
    Units reach = 0;
    std::array<UnitRange, 2> rs{m, r};
    std::sort(rs.begin(), rs.end(), [](const UnitRange& a, const UnitRange& b) { return a.lo < b.lo; });
    for (const auto& x : rs) {
      if (x.empty()) continue;
      if (x.lo > reach) break;
      reach = std::max(reach, x.hi);
    }
    if (reach < v.out_units) {
      f.violations.push_back({ViolationKind::Coverage, i, {}, "'" + v.name + "' unit " + std::to_string(reach) + " is unassigned"});
    }
  }
  // The final result always has to reach M, so the edge into `output` is exempt.
  const auto pi = oversize_mask(g);
  for (const auto& [u, v] : g.edges()) {
    if (!pi[u] || v == g.output_index()) continue;
    for (Device d : {Device::M, Device::R}) {
      const UnitRange x = p.range(d, v);
      if (x.empty()) continue;
      const UnitRange cover = child_cover(g.node(v), g.to_child_units(u, v, p.range(d, u)));
      if (!x.subset_of(cover)) {
        f.violations.push_back({ViolationKind::Oversize, v, u,
                                "edge " + g.node(u).name + " -> " + g.node(v).name + " would transfer toward " +
                                    std::string(to_string(d)) + " out of an oversize operator"});
      }
    }
  }
  return f;
}

struct TransferRecord {
  std::size_t u = 0;
  std::size_t v = 0;
  Device to = Device::M;
  std::vector<UnitRange> units;  // output units of u
  double bytes = 0.0;
  double start = 0.0;
  double end = 0.0;
};

struct MakespanReport {
  double T = 0.0;
  std::vector<std::optional<double>> s_m, s_r;
  std::vector<double> c_m, c_r;
  std::vector<TransferRecord> transfers;

  const std::optional<double>& start(Device d, std::size_t v) const { return d == Device::M ? s_m[v] : s_r[v]; }
  double bytes_transferred() const {
    double b = 0.0;
    for (const auto& t : transfers) b += t.bytes;
    return b;
  }
};

/// Units of u's output that device `d` must receive to compute x_d(v).
inline std::vector<UnitRange> missing_units(const ModelGraph& g, const SchedulePlan& p, Device d,
                                            std::size_t u, std::size_t v) {
  const UnitRange x = p.range(d, v);
  if (x.empty()) return {};
  return subtract(g.needed_from_parent(u, v, x), p.range(d, u));
}

namespace detail {

inline Feasibility structural_check(const ModelGraph& g, const SchedulePlan& p) {
  Feasibility f = is_feasible(g, p);
  std::erase_if(f.violations, [](const Violation& v) { return v.kind == ViolationKind::Oversize; });
  return f;
}

}  // namespace detail

/// Start times by the dependency recurrence. Each device runs its batched
/// launches one at a time in topological order; each link direction carries
/// transfers one at a time in the order their producing batches finish.
/// Does not check the oversize-transfer constraint (the solver penalizes it).
inline MakespanReport evaluate_schedule(const ModelGraph& g, const ProfileTable& prof, const LinkModel& link,
                                        const SchedulePlan& p, bool record = true) {
  const std::size_t n = g.size();
  MakespanReport rep;
  if (record) {
    rep.s_m.assign(n, std::nullopt);
    rep.s_r.assign(n, std::nullopt);
    rep.c_m.assign(n, 0.0);
    rep.c_r.assign(n, 0.0);
  }
  std::array<double, 2> device_free{0.0, 0.0};
  std::array<double, 2> link_free{0.0, 0.0};  // indexed by destination device
  std::array<std::vector<double>, 2> end{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  // arrival[d][v][k]: when the transfer from the k-th parent of v reaches d.
  std::array<std::vector<std::vector<double>>, 2> arrival;
  for (auto& a : arrival) {
    a.resize(n);
    for (std::size_t v = 0; v < n; ++v) a[v].assign(g.parents(v).size(), 0.0);
  }

  for (auto v : g.topo_order()) {
    for (Device d : {Device::M, Device::R}) {
      const UnitRange x = p.range(d, v);
      if (x.empty()) continue;
      double ready = device_free[idx(d)];
      const auto& ps = g.parents(v);
      for (std::size_t k = 0; k < ps.size(); ++k) {
        const std::size_t u = ps[k];
        const UnitRange need = g.needed_from_parent(u, v, x);
        if (!intersect(need, p.range(d, u)).empty()) ready = std::max(ready, end[idx(d)][u]);
        if (total_size(subtract(need, p.range(d, u))) > 0) ready = std::max(ready, arrival[idx(d)][v][k]);
      }
      const double c = compute_time(prof, g, d, v, x.size());
      end[idx(d)][v] = ready + c;
      device_free[idx(d)] = end[idx(d)][v];
      if (record) {
        (d == Device::M ? rep.s_m : rep.s_r)[v] = ready;
        (d == Device::M ? rep.c_m : rep.c_r)[v] = c;
      }
    }
    for (auto w : g.children(v)) {
      const auto& wp = g.parents(w);
      const std::size_t k = static_cast<std::size_t>(std::find(wp.begin(), wp.end(), v) - wp.begin());
      for (Device d : {Device::M, Device::R}) {
        auto miss = missing_units(g, p, d, v, w);
        const Units cnt = total_size(miss);
        if (cnt == 0) continue;
        const Device src = other(d);
        const double bytes = static_cast<double>(cnt) * prof.bytes_per_unit(v, w);
        const double start = std::max(link_free[idx(d)], end[idx(src)][v]);
        const double fin = start + tx_time(link, bytes);
        link_free[idx(d)] = fin;
        arrival[idx(d)][w][k] = fin;
        if (record) rep.transfers.push_back({v, w, d, std::move(miss), bytes, start, fin});
      }
    }
  }
  rep.T = *(record ? rep.s_m[g.output_index()] : std::optional<double>(end[0][g.output_index()]));
  return rep;
}

/// Makespan T = s_M(output) of a feasible plan.
inline MakespanReport evaluate_makespan(const ModelGraph& g, const ProfileTable& prof, const LinkModel& link,
                                        const SchedulePlan& p) {
  const Feasibility f = is_feasible(g, p);
  if (!f.ok()) throw Error(Errc::InfeasiblePlan, f.describe());
  return evaluate_schedule(g, prof, link, p, true);
}

struct LayerPartitionResult {
  std::size_t split = 0;
  MakespanReport report;
};

/// Exhaustive single-split baseline: prefix on M, suffix on R. Ties keep the
/// smaller split index.
inline LayerPartitionResult best_layer_partition(const ModelGraph& g, const ProfileTable& prof,
                                                 const LinkModel& link) {
  const std::size_t k = g.operator_order().size();
  LayerPartitionResult best;
  bool have = false;
  for (std::size_t s = 0; s <= k; ++s) {
    const SchedulePlan plan = plan_layer_split(g, s);
    auto rep = evaluate_schedule(g, prof, link, plan, true);
    if (!have || rep.T < best.report.T) {
      best = {s, std::move(rep)};
      have = true;
    }
  }
  return best;
}

}  // namespace intradp
