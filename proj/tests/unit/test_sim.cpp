#include <gtest/gtest.h>

#include <map>
#include <random>
#include <sstream>

#include <intradp/models.hpp>
#include <intradp/sim.hpp>

#include "../support/random_plans.hpp"

using namespace intradp;

namespace {

json ew(NodeId id, Units units, double bytes) {
  return {{"id", id}, {"name", "op" + std::to_string(id)}, {"op", "relu"},
          {"in_units", units}, {"out_units", units}, {"out_bytes_per_unit", bytes}};
}

json chain(std::vector<json> nodes, double raw) {
  json edges = json::array();
  for (std::size_t i = 1; i < nodes.size(); ++i) edges.push_back({nodes[i - 1]["id"], nodes[i]["id"]});
  return {{"raw_input_bytes", raw}, {"nodes", nodes}, {"edges", edges}};
}

ProfileTable uniform_profile(const ModelGraph& g, DeviceCost m, DeviceCost r) {
  ProfileTable p;
  p.costs.assign(g.size(), {});
  for (auto v : g.operator_order()) p.costs[v] = {m, r};
  default_edge_bytes(g, p);
  return p;
}

std::size_t count_on(const Timeline& t, Resource r) {
  std::size_t n = 0;
  for (const auto& e : t.events) n += e.resource == r;
  return n;
}

void expect_exclusive(const Timeline& t) {
  std::map<Resource, std::vector<std::pair<double, double>>> by;
  for (const auto& e : t.events) by[e.resource].push_back({e.start, e.end});
  for (auto& [r, xs] : by) {
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 1; i < xs.size(); ++i) ASSERT_LE(xs[i - 1].second, xs[i].first) << to_string(r);
  }
}

// Every transfer starts after its producer's batch on the sending device, and
// every launch starts after the transfers into it have landed.
void expect_causal(const ModelGraph& g, const Timeline& t) {
  std::map<std::pair<Resource, std::string>, double> compute_end;
  for (const auto& e : t.events) {
    if (e.resource == Resource::MCompute || e.resource == Resource::RCompute) compute_end[{e.resource, e.label}] = e.end;
  }
  for (const auto& e : t.events) {
    if (e.resource != Resource::LinkMR && e.resource != Resource::LinkRM) continue;
    const auto arrow = e.label.find("->");
    const std::string u = e.label.substr(0, arrow), v = e.label.substr(arrow + 2);
    const Resource from = e.resource == Resource::LinkMR ? Resource::MCompute : Resource::RCompute;
    const Resource to = e.resource == Resource::LinkMR ? Resource::RCompute : Resource::MCompute;
    ASSERT_TRUE(compute_end.count({from, u})) << e.label;
    const double produced = compute_end[{from, u}];
    EXPECT_GE(e.start, produced) << e.label;
    for (const auto& c : t.events) {
      if (c.resource == to && c.label == v) EXPECT_GE(c.start, e.end) << e.label;
    }
  }
  (void)g;
}

}  // namespace

TEST(Simulate, DeviceOnlyIsOneComputeChain) {
  const auto g = build_graph(chain({ew(1, 4, 4.0), ew(2, 4, 4.0)}, 16.0));
  const auto prof = uniform_profile(g, {1e-3, 1e-3}, {0, 1e-4});
  const auto t = simulate(g, prof, LinkModel::from_mbps(10), plan_device_only(g));
  EXPECT_EQ(count_on(t, Resource::LinkMR) + count_on(t, Resource::LinkRM), 0u);
  EXPECT_EQ(count_on(t, Resource::RCompute), 0u);
  EXPECT_NEAR(t.makespan, 2 * (1e-3 + 4e-3), 1e-15);
  const auto b = breakdown(t);
  EXPECT_EQ(b.transmit, 0.0);
  EXPECT_NEAR(b.m_idle, 0.0, 1e-15);
}

TEST(Simulate, ReplicationComputesOnBothSidesWithoutTransfer) {
  const auto g = build_graph(chain({ew(1, 4, 4.0), ew(2, 4, 4.0)}, 16.0));
  const auto prof = uniform_profile(g, {0, 1e-3}, {0, 1e-4});
  SchedulePlan p = SchedulePlan::located(g);
  for (NodeId id : {1, 2}) {
    p.m[g.index_of(id)] = {0, 3};
    p.r[g.index_of(id)] = {1, 4};
  }
  ASSERT_TRUE(is_feasible(g, p).ok());
  const auto t = simulate(g, prof, LinkModel::from_mbps(1), p);
  for (const char* name : {"op1", "op2"}) {
    int seen = 0;
    for (const auto& e : t.events) seen += e.label == name;
    EXPECT_EQ(seen, 2) << name;
  }
  for (const auto& e : t.events) EXPECT_NE(e.label, "op1->op2");
  EXPECT_EQ(t.makespan, evaluate_makespan(g, prof, LinkModel::from_mbps(1), p).T);
}

TEST(Simulate, InfeasiblePlanIsRejected) {
  const auto g = build_graph(chain({ew(1, 6, 8.0), ew(2, 6, 4.0)}, 24.0));
  const auto prof = uniform_profile(g, {0, 1e-3}, {0, 1e-3});
  try {
    simulate(g, prof, LinkModel::from_mbps(10), plan_layer_split(g, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InfeasiblePlan);
  }
}

TEST(Simulate, MatchesEvaluatorExactlyOnRandomPlans) {
  std::mt19937_64 rng(2024);
  int replicated = 0, with_transfers = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(i);
    const auto g = build_graph(i % 2 == 0 ? random_chain(seed) : random_dag(seed));
    const auto prof = random_profile(g, seed);
    const LinkModel link = LinkModel::from_mbps(std::uniform_real_distribution<double>(0.05, 5.0)(rng), 1e-4);
    const auto p = test_support::random_feasible_plan(g, rng);
    replicated += test_support::has_replication(g, p);
    const auto t = simulate(g, prof, link, p);
    ASSERT_EQ(t.makespan, evaluate_makespan(g, prof, link, p).T) << "case " << i;
    with_transfers += t.bytes_transferred() > 0.0;
    expect_exclusive(t);
    expect_causal(g, t);
    const auto b = breakdown(t);
    EXPECT_NEAR(b.m_compute + b.m_idle, t.makespan, 1e-12);
  }
  EXPECT_GT(replicated, 100);
  EXPECT_GT(with_transfers, 500);
}

TEST(Energy, HandComputedExamples) {
  const EnergyModel e;
  Timeline t;
  t.events = {{Resource::MCompute, "a", 0.0, 0.1}, {Resource::LinkMR, "a->b", 0.1, 0.15, 10.0}};
  t.makespan = 0.17;
  EXPECT_NEAR(energy_of(t, e), 0.1 * 13.35 + 0.05 * 4.25 + 0.02 * 4.04, 1e-12);
  EXPECT_NEAR(energy_of(t, e), 1.6283, 1e-12);

  // Link activity under compute is charged as compute.
  Timeline overlap;
  overlap.events = {{Resource::MCompute, "a", 0.0, 0.1}, {Resource::LinkRM, "x->y", 0.05, 0.15, 1.0},
                    {Resource::LinkMR, "a->b", 0.12, 0.14, 1.0}};
  overlap.makespan = 0.2;
  EXPECT_NEAR(energy_of(overlap, e), 0.1 * 13.35 + 0.05 * 4.25 + 0.05 * 4.04, 1e-12);

  EXPECT_EQ(energy_of(Timeline{}, e), 0.0);
}

TEST(Energy, DeviceOnlyDrawsInferencePowerThroughout) {
  const auto g = build_graph(vgg_like_model());
  const auto prof = synth_profile(g, vgg_profile_params(), 3);
  const auto t = simulate(g, prof, LinkModel::from_mbps(50, kVggLinkLatency), plan_device_only(g));
  EXPECT_NEAR(energy_of(t, EnergyModel{}), 13.35 * t.makespan, 1e-9);
}

TEST(Breakdown, ServerOnlyHasNoDeviceCompute) {
  const auto g = build_graph(vgg_like_model());
  const auto prof = synth_profile(g, vgg_profile_params(), 3);
  const LinkModel link = LinkModel::from_mbps(50, kVggLinkLatency);
  const auto t = simulate(g, prof, link, plan_server_only(g));
  const auto b = breakdown(t);
  EXPECT_EQ(b.m_compute, 0.0);
  EXPECT_DOUBLE_EQ(b.m_idle, t.makespan);
  EXPECT_GT(b.transmit, 0.0);
  EXPECT_GT(b.r_compute, 0.0);
  EXPECT_EQ(t.makespan, evaluate_makespan(g, prof, link, plan_server_only(g)).T);
}

TEST(TimelineCsv, HeaderAndRows) {
  const auto g = build_graph(chain({ew(1, 4, 4.0)}, 16.0));
  const auto prof = uniform_profile(g, {0, 1e-3}, {0, 1e-3});
  std::ostringstream os;
  write_timeline_csv(os, simulate(g, prof, LinkModel::from_mbps(1), plan_device_only(g)));
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "resource,label,start_s,end_s");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 3);
}
