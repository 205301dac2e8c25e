#include <gtest/gtest.h>

#include <sstream>

#include <intradp/models.hpp>
#include <intradp/report.hpp>

using namespace intradp;

namespace {

json ew(NodeId id, Units units, double bytes) {
  return {{"id", id}, {"name", "op" + std::to_string(id)}, {"op", "relu"},
          {"in_units", units}, {"out_units", units}, {"out_bytes_per_unit", bytes}};
}

// No operator outgrows the input, so every layer split is admissible.
ModelGraph shrinking_chain() {
  std::vector<json> nodes{ew(1, 6, 4.0), ew(2, 6, 3.0), ew(3, 6, 2.0), ew(4, 6, 1.0)};
  json edges = json::array();
  for (std::size_t i = 1; i < nodes.size(); ++i) edges.push_back({nodes[i - 1]["id"], nodes[i]["id"]});
  return build_graph({{"raw_input_bytes", 24.0}, {"nodes", nodes}, {"edges", edges}});
}

DEConfig quick() {
  DEConfig c;
  c.population = 24;
  c.generations = 40;
  return c;
}

std::string csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  write_rows_csv(os, rows);
  return os.str();
}

}  // namespace

TEST(BandwidthRange, InclusiveEndpoints) {
  const auto r = bandwidth_range(0, 200, 10);
  ASSERT_EQ(r.size(), 21u);
  EXPECT_EQ(r.front(), 0.0);
  EXPECT_EQ(r.back(), 200.0);
  EXPECT_THROW(bandwidth_range(0, 10, 0), Error);
}

TEST(Sweep, RowsSortedAndIntraDpDominates) {
  const auto g = shrinking_chain();
  const auto prof = random_profile(g, 5);
  SweepSpec spec;
  spec.bandwidths_mbps = {0.2, 0.0, 0.05, 0.1};
  spec.repetitions = 2;
  const auto rows = run_sweep(g, prof, spec, quick(), 1e-4, 3);
  ASSERT_EQ(rows.size(), 4u * 4u * 2u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& a = rows[i - 1];
    const auto& b = rows[i];
    EXPECT_TRUE(std::tie(a.bandwidth_mbps, a.system, a.repetition) < std::tie(b.bandwidth_mbps, b.system, b.repetition));
  }
  for (std::size_t i = 0; i < rows.size(); i += 8) {
    const double bw = rows[i].bandwidth_mbps;
    for (std::size_t rep = 0; rep < 2; ++rep) {
      double mine = 0, best_other = std::numeric_limits<double>::infinity();
      for (std::size_t k = i; k < i + 8; ++k) {
        if (rows[k].repetition != rep) continue;
        if (rows[k].system == System::IntraDP) mine = rows[k].makespan_s;
        else best_other = std::min(best_other, rows[k].makespan_s);
      }
      EXPECT_LE(mine, best_other) << "bw " << bw;
    }
  }
  // At zero bandwidth Intra-DP runs the device-only plan.
  EXPECT_EQ(rows[0].system, System::IntraDP);
  EXPECT_EQ(rows[2].system, System::DeviceOnly);
  EXPECT_EQ(rows[0].makespan_s, rows[2].makespan_s);
  EXPECT_EQ(rows[0].energy_j, rows[2].energy_j);
  EXPECT_TRUE(std::isinf(rows[4].makespan_s));  // server-only at 0 Mbps

  EXPECT_EQ(csv(rows), csv(run_sweep(g, prof, spec, quick(), 1e-4, 1)));
}

TEST(Sweep, ConservationHoldsOnEveryFiniteRow) {
  const auto g = build_graph(random_dag(4));
  const auto prof = random_profile(g, 4);
  SweepSpec spec;
  spec.bandwidths_mbps = {0.01, 0.3};
  for (const auto& r : run_sweep(g, prof, spec, quick())) {
    ASSERT_TRUE(std::isfinite(r.makespan_s));
    EXPECT_LE(r.m_compute_s, r.makespan_s + 1e-12);
    EXPECT_LE(r.transmit_s, r.makespan_s + 1e-12);
    EXPECT_GE(r.energy_j, 4.04 * r.makespan_s - 1e-12);
    EXPECT_LE(r.energy_j, 13.35 * r.makespan_s + 1e-12);
  }
}

TEST(ReportCsv, RoundTripAndErrors) {
  const auto g = shrinking_chain();
  const auto prof = random_profile(g, 2);
  SweepSpec spec;
  spec.bandwidths_mbps = {0.0, 0.1};
  const auto rows = run_sweep(g, prof, spec, quick());
  std::istringstream in(csv(rows));
  const auto back = read_rows_csv(in);
  EXPECT_EQ(csv(back), csv(rows));

  std::istringstream headerless("intradp,0,0,1,1,1,0,0,0\n");
  EXPECT_THROW(read_rows_csv(headerless), Error);
  std::istringstream short_row(std::string(kReportHeader) + "\nintradp,0,0\n");
  EXPECT_THROW(read_rows_csv(short_row), Error);
  std::istringstream bad_system(std::string(kReportHeader) + "\nmystery,0,0,1,1,1,0,0,0\n");
  EXPECT_THROW(read_rows_csv(bad_system), Error);
}

TEST(Report, MediansAndRatios) {
  std::vector<ReportRow> rows;
  for (double m : {3.0, 1.0, 2.0}) rows.push_back({System::IntraDP, 10.0, rows.size(), m, 2 * m});
  for (double m : {4.0, 4.0, 4.0}) rows.push_back({System::DeviceOnly, 10.0, rows.size(), m, 8.0});
  const auto med = aggregate_medians(rows);
  ASSERT_EQ(med.size(), 2u);
  EXPECT_EQ(med[0].makespan_s, 2.0);
  EXPECT_EQ(med[0].energy_j, 4.0);
  EXPECT_EQ(median({1.0, 2.0, 3.0, 4.0}), 2.5);

  std::ostringstream os;
  write_report(os, rows);
  EXPECT_EQ(os.str(),
            "bandwidth_mbps,intradp_makespan_s,intradp_energy_j,device_only_makespan_s,device_only_energy_j,"
            "intradp_latency_vs_device,intradp_energy_vs_device\n"
            "10,2,4,4,8,0.5,0.5\n");
}
