#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "plan_table.hpp"
#include "sim.hpp"

namespace intradp {

enum class System : int { IntraDP = 0, DeviceOnly = 1, ServerOnly = 2, LayerPartition = 3 };

inline constexpr std::array<System, 4> kAllSystems{System::IntraDP, System::DeviceOnly, System::ServerOnly,
                                                   System::LayerPartition};

constexpr std::string_view to_string(System s) {
  switch (s) {
    case System::IntraDP: return "intradp";
    case System::DeviceOnly: return "device_only";
    case System::ServerOnly: return "server_only";
    case System::LayerPartition: return "layer_partition";
  }
  return "?";
}

inline System parse_system(std::string_view s) {
  for (auto sys : kAllSystems) {
    if (to_string(sys) == s) return sys;
  }
  throw Error(Errc::InvalidArgument, "unknown system '" + std::string(s) + "'");
}

struct SweepSpec {
  std::vector<double> bandwidths_mbps;
  std::vector<System> systems{kAllSystems.begin(), kAllSystems.end()};
  std::size_t repetitions = 1;
  std::uint64_t seed = 1;

  void validate() const {
    if (bandwidths_mbps.empty()) throw Error(Errc::InvalidArgument, "sweep has no bandwidth points");
    if (systems.empty()) throw Error(Errc::InvalidArgument, "sweep has no systems");
    if (repetitions < 1) throw Error(Errc::InvalidArgument, "repetitions must be >= 1");
    for (double b : bandwidths_mbps) {
      if (!(b >= 0.0)) throw Error(Errc::InvalidArgument, "bandwidth must be >= 0");
    }
  }
};

/// Inclusive range lo, lo+step, ..., hi.
inline std::vector<double> bandwidth_range(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo) throw Error(Errc::InvalidArgument, "bad bandwidth range");
  std::vector<double> out;
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
  for (std::size_t k = 0; k <= n; ++k) out.push_back(lo + static_cast<double>(k) * step);
  return out;
}

struct ReportRow {
  System system = System::IntraDP;
  double bandwidth_mbps = 0.0;
  std::size_t repetition = 0;
  double makespan_s = 0.0;
  double energy_j = 0.0;
  double m_compute_s = 0.0;
  double r_compute_s = 0.0;
  double transmit_s = 0.0;
  double bytes_transferred = 0.0;
};

struct ScenarioResult {
  SchedulePlan plan;
  Timeline timeline;
};

/// Plan a system would run at `mbps`; Intra-DP solves at that exact bandwidth.
inline SchedulePlan plan_for(System s, const ModelGraph& g, const ProfileTable& prof, const LinkModel& link,
                             const DEConfig& cfg) {
  switch (s) {
    case System::IntraDP: return solve_loss(g, prof, link, cfg).plan;
    case System::DeviceOnly: return plan_device_only(g);
    case System::ServerOnly: return plan_server_only(g);
    case System::LayerPartition: return plan_layer_split(g, best_layer_partition(g, prof, link).split);
  }
  throw Error(Errc::InvalidArgument, "unknown system");
}

inline ReportRow row_from_timeline(System s, double mbps, std::size_t rep, const Timeline& t,
                                   const EnergyModel& e = {}) {
  ReportRow r;
  r.system = s;
  r.bandwidth_mbps = mbps;
  r.repetition = rep;
  r.makespan_s = t.makespan;
  r.bytes_transferred = t.bytes_transferred();
  if (!std::isfinite(t.makespan)) {
    const double inf = std::numeric_limits<double>::infinity();
    r.energy_j = r.transmit_s = inf;
    for (const auto& ev : t.events) {
      if (ev.resource == Resource::MCompute) r.m_compute_s += ev.end - ev.start;
      if (ev.resource == Resource::RCompute && std::isfinite(ev.end)) r.r_compute_s += ev.end - ev.start;
    }
    return r;
  }
  const PhaseBreakdown b = breakdown(t);
  if (std::abs(b.m_compute + b.m_idle - t.makespan) > 1e-9) {
    throw Error(Errc::InvalidArgument, "phase breakdown does not add up to the makespan");
  }
  r.energy_j = energy_of(t, e);
  r.m_compute_s = b.m_compute;
  r.r_compute_s = b.r_compute;
  r.transmit_s = b.transmit;
  return r;
}

/// One row per (bandwidth, system, repetition), in that sort order. Points run
/// on up to `jobs` threads; the output order does not depend on completion.
inline std::vector<ReportRow> run_sweep(const ModelGraph& g, const ProfileTable& prof, const SweepSpec& spec,
                                        const DEConfig& base, double latency_s = 0.0, unsigned jobs = 1) {
  spec.validate();
  struct Point {
    double mbps;
    System sys;
    std::size_t rep;
  };
  std::vector<double> bws = spec.bandwidths_mbps;
  std::sort(bws.begin(), bws.end());
  bws.erase(std::unique(bws.begin(), bws.end()), bws.end());
  std::vector<System> systems = spec.systems;
  std::sort(systems.begin(), systems.end());
  systems.erase(std::unique(systems.begin(), systems.end()), systems.end());
  std::vector<Point> points;
  for (double b : bws) {
    for (auto s : systems) {
      for (std::size_t k = 0; k < spec.repetitions; ++k) points.push_back({b, s, k});
    }
  }
  std::vector<ReportRow> rows(points.size());
  auto work = [&](std::size_t i) {
    const Point& pt = points[i];
    const LinkModel link = LinkModel::from_mbps(pt.mbps, latency_s);
    DEConfig cfg = base;
    cfg.seed = spec.seed + pt.rep;
    const SchedulePlan plan = plan_for(pt.sys, g, prof, link, cfg);
    const bool baseline = pt.sys == System::LayerPartition;
    rows[i] = row_from_timeline(pt.sys, pt.mbps, pt.rep, simulate(g, prof, link, plan, !baseline));
  };
  jobs = std::max(1u, jobs);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < jobs; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < points.size(); i += jobs) work(i);
    });
  }
  for (auto& th : pool) th.join();
  return rows;
}

inline const char* kReportHeader =
    "system,bandwidth_mbps,repetition,makespan_s,energy_j,m_compute_s,r_compute_s,transmit_s,bytes_transferred";

inline void write_rows_csv(std::ostream& os, const std::vector<ReportRow>& rows) {
  os << kReportHeader << '\n';
  os << std::setprecision(17);
  for (const auto& r : rows) {
    os << to_string(r.system) << ',' << r.bandwidth_mbps << ',' << r.repetition << ',' << r.makespan_s << ','
       << r.energy_j << ',' << r.m_compute_s << ',' << r.r_compute_s << ',' << r.transmit_s << ','
       << r.bytes_transferred << '\n';
  }
}

inline std::vector<ReportRow> read_rows_csv(std::istream& in) {
  std::vector<ReportRow> rows;
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) {
    throw Error(Errc::SchemaViolation, "sweep file lacks the expected header");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw Error(Errc::SchemaViolation, "sweep line " + std::to_string(lineno) + " has " +
                                                              std::to_string(f.size()) + " fields");
    try {
      ReportRow r;
      r.system = parse_system(f[0]);
      r.bandwidth_mbps = std::stod(f[1]);
      r.repetition = std::stoul(f[2]);
      r.makespan_s = std::stod(f[3]);
      r.energy_j = std::stod(f[4]);
      r.m_compute_s = std::stod(f[5]);
      r.r_compute_s = std::stod(f[6]);
      r.transmit_s = std::stod(f[7]);
      r.bytes_transferred = std::stod(f[8]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw Error(Errc::SchemaViolation, "sweep line " + std::to_string(lineno) + " is not numeric");
    }
  }
  return rows;
}

inline double median(std::vector<double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

/// Median over repetitions, keyed by (bandwidth, system).
inline std::vector<ReportRow> aggregate_medians(const std::vector<ReportRow>& rows) {
  std::map<std::pair<double, System>, std::vector<ReportRow>> groups;
  for (const auto& r : rows) groups[{r.bandwidth_mbps, r.system}].push_back(r);
  std::vector<ReportRow> out;
  for (const auto& [key, rs] : groups) {
    auto col = [&](double ReportRow::*m) {
      std::vector<double> xs;
      for (const auto& r : rs) xs.push_back(r.*m);
      return median(xs);
    };
    ReportRow m;
    m.bandwidth_mbps = key.first;
    m.system = key.second;
    m.repetition = rs.size();
    m.makespan_s = col(&ReportRow::makespan_s);
    m.energy_j = col(&ReportRow::energy_j);
    m.m_compute_s = col(&ReportRow::m_compute_s);
    m.r_compute_s = col(&ReportRow::r_compute_s);
    m.transmit_s = col(&ReportRow::transmit_s);
    m.bytes_transferred = col(&ReportRow::bytes_transferred);
    out.push_back(m);
  }
  return out;
}

/// Comparison table: one line per bandwidth, makespan and energy per system,
/// plus Intra-DP's ratios against device-only.
inline void write_report(std::ostream& os, const std::vector<ReportRow>& rows) {
  const auto med = aggregate_medians(rows);
  std::map<double, std::map<System, ReportRow>> by_bw;
  std::vector<System> present;
  for (const auto& r : med) {
    by_bw[r.bandwidth_mbps][r.system] = r;
    if (std::find(present.begin(), present.end(), r.system) == present.end()) present.push_back(r.system);
  }
  std::sort(present.begin(), present.end());
  os << "bandwidth_mbps";
  for (auto s : present) os << ',' << to_string(s) << "_makespan_s," << to_string(s) << "_energy_j";
  const bool ratios = std::count(present.begin(), present.end(), System::IntraDP) &&
                      std::count(present.begin(), present.end(), System::DeviceOnly);
  if (ratios) os << ",intradp_latency_vs_device,intradp_energy_vs_device";
  os << '\n' << std::setprecision(10);
  for (const auto& [bw, m] : by_bw) {
    os << bw;
    for (auto s : present) {
      auto it = m.find(s);
      if (it == m.end()) os << ",,";
      else os << ',' << it->second.makespan_s << ',' << it->second.energy_j;
    }
    if (ratios && m.count(System::IntraDP) && m.count(System::DeviceOnly)) {
      const auto& a = m.at(System::IntraDP);
      const auto& d = m.at(System::DeviceOnly);
      os << ',' << a.makespan_s / d.makespan_s << ',' << a.energy_j / d.energy_j;
    }
    os << '\n';
  }
}

}  // namespace intradp
