#pragma once

#include <algorithm>
#include <array>
#include <initializer_list>
#include <deque>
#include <map>
#include <ostream>
#include <queue>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "plan.hpp"

namespace intradp {

enum class Resource : int { MCompute = 0, RCompute = 1, LinkMR = 2, LinkRM = 3 };

constexpr std::string_view to_string(Resource r) {
  switch (r) {
    case Resource::MCompute: return "M-compute";
    case Resource::RCompute: return "R-compute";
    case Resource::LinkMR: return "link-MR";
    case Resource::LinkRM: return "link-RM";
  }
  return "?";
}

struct TimelineEvent {
  Resource resource;
  std::string label;
  double start = 0.0;
  double end = 0.0;
  double bytes = 0.0;  // link events only
};

struct Timeline {
  std::vector<TimelineEvent> events;
  double makespan = 0.0;

  double bytes_transferred() const {
    double b = 0.0;
    for (const auto& e : events) b += e.bytes;
    return b;
  }
};

/// Client power draw per state, in watts.
struct EnergyModel {
  double p_inference = 13.35;
  double p_communication = 4.25;
  double p_standby = 4.04;
};

struct PhaseBreakdown {
  double m_compute = 0.0;
  double r_compute = 0.0;
  double transmit = 0.0;
  double m_idle = 0.0;
};

namespace detail {

struct Interval {
  double lo, hi;
};

// Sorted, merged union of intervals clipped to [0, limit].
inline std::vector<Interval> merged(std::vector<Interval> xs, double limit) {
  std::vector<Interval> out;
  for (auto& x : xs) {
    x.lo = std::max(0.0, x.lo);
    x.hi = std::min(limit, x.hi);
  }
  std::erase_if(xs, [](const Interval& x) { return !(x.hi > x.lo); });
  std::sort(xs.begin(), xs.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  for (const auto& x : xs) {
    if (!out.empty() && x.lo <= out.back().hi) out.back().hi = std::max(out.back().hi, x.hi);
    else out.push_back(x);
  }
  return out;
}

inline double length(const std::vector<Interval>& xs) {
  double s = 0.0;
  for (const auto& x : xs) s += x.hi - x.lo;
  return s;
}

// Length of a \ b for two merged interval lists.
inline double length_minus(const std::vector<Interval>& a, const std::vector<Interval>& b) {
  double s = 0.0;
  for (const auto& x : a) {
    double covered = 0.0;
    for (const auto& y : b) {
      const double lo = std::max(x.lo, y.lo), hi = std::min(x.hi, y.hi);
      if (hi > lo) covered += hi - lo;
    }
    s += (x.hi - x.lo) - covered;
  }
  return s;
}

inline std::vector<Interval> busy(const Timeline& t, std::initializer_list<Resource> rs, double limit) {
  std::vector<Interval> xs;
  for (const auto& e : t.events) {
    if (std::find(rs.begin(), rs.end(), e.resource) != rs.end()) xs.push_back({e.start, e.end});
  }
  return merged(std::move(xs), limit);
}

class Simulator {
 public:
  Simulator(const ModelGraph& g, const ProfileTable& prof, const LinkModel& link, const SchedulePlan& p)
      : g_(g), prof_(prof), link_(link), p_(p) {}

  Timeline run() {
    const std::size_t n = g_.size();
    for (Device d : {Device::M, Device::R}) {
      auto& s = stream_[idx(d)];
      for (auto v : g_.topo_order()) {
        if (!p_.range(d, v).empty()) s.push_back(v);
      }
      done_[idx(d)].assign(n, 0);
    }
    try_launch(0.0);
    bool finished = false;
    while (!queue_.empty()) {
      const Pending ev = queue_.top();
      queue_.pop();
      const double now = ev.time;
      if (ev.resource == Resource::MCompute || ev.resource == Resource::RCompute) {
        const Device d = ev.resource == Resource::MCompute ? Device::M : Device::R;
        busy_[idx(d)] = false;
        done_[idx(d)][ev.v] = 1;
        if (d == Device::M && ev.v == g_.output_index()) {
          timeline_.makespan = now;
          finished = true;
        }
        emit_transfers(d, ev.v, now);
      } else {
        const Device to = ev.resource == Resource::LinkMR ? Device::R : Device::M;
        delivered_.insert({ev.u, ev.v, idx(to)});
        link_busy_[idx(to)] = false;
        start_next_transfer(to, now);
      }
      try_launch(now);
    }
    if (!finished) throw Error(Errc::Deadlock, "the output never became available on M");
    return std::move(timeline_);
  }

 private:
  struct Pending {
    double time;
    Resource resource;
    std::size_t u;  // producer (links) or unused
    std::size_t v;  // node (compute) or consumer (links)
    std::size_t order;

    // Min-heap on (time, resource, topological label).
    bool operator<(const Pending& o) const {
      return std::tie(time, resource, order) > std::tie(o.time, o.resource, o.order);
    }
  };

  struct Transfer {
    std::size_t u, v;
    double bytes;
  };

  std::size_t label_order(std::size_t u, std::size_t v) const {
    return g_.topo_position(u) * g_.size() + g_.topo_position(v);
  }

  bool inputs_present(Device d, std::size_t v) const {
    const UnitRange x = p_.range(d, v);
    for (auto u : g_.parents(v)) {
      const UnitRange need = g_.needed_from_parent(u, v, x);
      const UnitRange mine = p_.range(d, u);
      if (!intersect(need, mine).empty() && !done_[idx(d)][u]) return false;
      if (total_size(subtract(need, mine)) > 0 && !delivered_.count({u, v, idx(d)})) return false;
    }
    return true;
  }

  void try_launch(double now) {
    for (Device d : {Device::M, Device::R}) {
      auto& s = stream_[idx(d)];
      auto& head = head_[idx(d)];
      if (busy_[idx(d)] || head >= s.size()) continue;
      const std::size_t v = s[head];
      if (!inputs_present(d, v)) continue;
      const double c = compute_time(prof_, g_, d, v, p_.range(d, v).size());
      const Resource res = d == Device::M ? Resource::MCompute : Resource::RCompute;
      timeline_.events.push_back({res, g_.node(v).name, now, now + c, 0.0});
      queue_.push({now + c, res, v, v, g_.topo_position(v)});
      busy_[idx(d)] = true;
      ++head;
    }
  }

  // A finished batch on `d` feeds every child whose other-device range needs
  // units that only `d` holds.
  void emit_transfers(Device d, std::size_t u, double now) {
    const Device to = other(d);
    for (auto v : g_.children(u)) {
      const UnitRange x = p_.range(to, v);
      if (x.empty()) continue;
      const Units cnt = total_size(subtract(g_.needed_from_parent(u, v, x), p_.range(to, u)));
      if (cnt == 0) continue;
      fifo_[idx(to)].push_back({u, v, static_cast<double>(cnt) * prof_.bytes_per_unit(u, v)});
    }
    start_next_transfer(to, now);
  }

  void start_next_transfer(Device to, double now) {
    auto& q = fifo_[idx(to)];
    if (link_busy_[idx(to)] || q.empty()) return;
    const Transfer t = q.front();
    q.pop_front();
    const double fin = now + tx_time(link_, t.bytes);
    const Resource res = to == Device::R ? Resource::LinkMR : Resource::LinkRM;
    timeline_.events.push_back({res, g_.node(t.u).name + "->" + g_.node(t.v).name, now, fin, t.bytes});
    queue_.push({fin, res, t.u, t.v, label_order(t.u, t.v)});
    link_busy_[idx(to)] = true;
  }

  const ModelGraph& g_;
  const ProfileTable& prof_;
  const LinkModel& link_;
  const SchedulePlan& p_;

  std::array<std::vector<std::size_t>, 2> stream_;
  std::array<std::size_t, 2> head_{0, 0};
  std::array<bool, 2> busy_{false, false};
  std::array<std::vector<char>, 2> done_;
  std::array<std::deque<Transfer>, 2> fifo_;  // by destination device
  std::array<bool, 2> link_busy_{false, false};
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> delivered_;
  std::priority_queue<Pending> queue_;
  Timeline timeline_;
};

}  // namespace detail

/// Event-driven execution of a feasible plan. Baselines that ignore the
/// oversize-transfer rule pass `check_oversize = false`.
inline Timeline simulate(const ModelGraph& g, const ProfileTable& prof, const LinkModel& link,
                         const SchedulePlan& p, bool check_oversize = true) {
  const Feasibility f = check_oversize ? is_feasible(g, p) : detail::structural_check(g, p);
  if (!f.ok()) throw Error(Errc::InfeasiblePlan, f.describe());
  return detail::Simulator(g, prof, link, p).run();
}

/// Client-side energy over [0, makespan]: inference power while M computes,
/// communication power while a link is busy and M is not, standby otherwise.
inline double energy_of(const Timeline& t, const EnergyModel& e) {
  const double T = t.makespan;
  if (!(T > 0.0)) return 0.0;
  const auto compute = detail::busy(t, {Resource::MCompute}, T);
  const auto links = detail::busy(t, {Resource::LinkMR, Resource::LinkRM}, T);
  const double tc = detail::length(compute);
  const double tl = detail::length_minus(links, compute);
  const double ts = std::max(0.0, T - tc - tl);
  return e.p_inference * tc + e.p_communication * tl + e.p_standby * ts;
}

inline PhaseBreakdown breakdown(const Timeline& t) {
  PhaseBreakdown b;
  const double T = t.makespan;
  b.m_compute = detail::length(detail::busy(t, {Resource::MCompute}, T));
  for (const auto& e : t.events) {
    if (e.resource == Resource::RCompute) b.r_compute += e.end - e.start;
  }
  b.transmit = detail::length(detail::busy(t, {Resource::LinkMR, Resource::LinkRM}, T));
  b.m_idle = std::max(0.0, T - b.m_compute);
  return b;
}

/// Delimited rows: resource,label,start_s,end_s.
inline void write_timeline_csv(std::ostream& os, const Timeline& t) {
  os << "resource,label,start_s,end_s\n";
  os.precision(17);
  for (const auto& e : t.events) {
    os << to_string(e.resource) << ',' << e.label << ',' << e.start << ',' << e.end << '\n';
  }
}

}  // namespace intradp
