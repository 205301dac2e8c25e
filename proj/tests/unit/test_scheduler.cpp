#include <gtest/gtest.h>

#include <cmath>

#include <intradp/models.hpp>
#include <intradp/plan_table.hpp>
#include <intradp/sim.hpp>

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

DEConfig quick(std::uint64_t seed = 1) {
  DEConfig c;
  c.population = 32;
  c.generations = 80;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Feasibility, Examples) {
  const auto g = build_graph(chain({ew(1, 6, 4.0), ew(2, 6, 4.0)}, 24.0));
  EXPECT_TRUE(is_feasible(g, plan_device_only(g)).ok());
  EXPECT_TRUE(is_feasible(g, plan_server_only(g)).ok());

  SchedulePlan gap = plan_device_only(g);
  gap.m[g.index_of(1)] = {0, 2};
  gap.r[g.index_of(1)] = {3, 6};
  const auto f = is_feasible(g, gap);
  EXPECT_FALSE(f.ok());
  EXPECT_EQ(f.count(ViolationKind::Coverage), 1u);

  SchedulePlan misplaced = plan_device_only(g);
  misplaced.r[g.input_index()] = {0, 6};
  EXPECT_GE(is_feasible(g, misplaced).count(ViolationKind::Location), 1u);

  SchedulePlan suffix_on_m = plan_device_only(g);
  suffix_on_m.m[g.index_of(1)] = {2, 6};
  suffix_on_m.r[g.index_of(1)] = {0, 2};
  EXPECT_GE(is_feasible(g, suffix_on_m).count(ViolationKind::Orientation), 1u);

  SchedulePlan short_plan = plan_device_only(g);
  short_plan.m.pop_back();
  EXPECT_THROW(is_feasible(g, short_plan), Error);
}

TEST(Feasibility, TransferOutOfOversizeNodeIsListed) {
  // op1 writes 48 bytes against a 24-byte input, so nothing may cross right after it.
  const auto g = build_graph(chain({ew(1, 6, 8.0), ew(2, 6, 4.0)}, 24.0));
  ASSERT_EQ(oversize_set(g).size(), 1u);
  const auto split_after = plan_layer_split(g, 1);
  const auto f = is_feasible(g, split_after);
  EXPECT_EQ(f.count(ViolationKind::Oversize), 1u);
  EXPECT_NE(f.describe().find("oversize"), std::string::npos);
  EXPECT_TRUE(is_feasible(g, plan_layer_split(g, 2)).ok());
  try {
    evaluate_makespan(g, uniform_profile(g, {0, 1e-3}, {0, 1e-3}), LinkModel::from_mbps(10), split_after);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InfeasiblePlan);
  }
}

TEST(Evaluate, DeviceOnlyAndServerOnlyClosedForms) {
  const auto g = build_graph(vgg_like_model());
  const auto prof = synth_profile(g, vgg_profile_params(), 3);
  const LinkModel link = LinkModel::from_mbps(40, 1e-3);
  double sum_m = 0.0, sum_r = 0.0;
  for (auto v : g.topo_order()) {
    sum_m += compute_time(prof, g, Device::M, v, g.node(v).out_units);
    sum_r += compute_time(prof, g, Device::R, v, g.node(v).out_units);
  }
  const auto dev = evaluate_makespan(g, prof, link, plan_device_only(g));
  EXPECT_NEAR(dev.T, sum_m, 1e-12);
  EXPECT_EQ(dev.bytes_transferred(), 0.0);

  const auto ops = g.operator_order();
  const double out_bytes = g.node(ops.back()).out_bytes();
  const auto srv = evaluate_makespan(g, prof, link, plan_server_only(g));
  EXPECT_NEAR(srv.T, tx_time(link, g.raw_input_bytes()) + sum_r + tx_time(link, out_bytes), 1e-12);
  EXPECT_DOUBLE_EQ(srv.bytes_transferred(), g.raw_input_bytes() + out_bytes);
  EXPECT_TRUE(std::isinf(evaluate_makespan(g, prof, LinkModel::from_mbps(0), plan_server_only(g)).T));
}

TEST(Evaluate, TwoOperatorHandTimeline) {
  // 125 bytes per unit at 1 Mbps is 1 ms per unit.
  const auto g = build_graph(chain({ew(1, 4, 125.0), ew(2, 4, 125.0)}, 500.0));
  const auto prof = uniform_profile(g, {0.0, 2e-3}, {0.0, 1e-3});
  const LinkModel link = LinkModel::from_mbps(1);
  SchedulePlan p = SchedulePlan::located(g);
  for (NodeId id : {1, 2}) {
    p.m[g.index_of(id)] = {0, 2};
    p.r[g.index_of(id)] = {2, 4};
  }
  // M: op1 [0,4) ms, op2 [4,8) ms. Link M->R: input units 2..3 over [0,2) ms.
  // R: op1 [2,4) ms, op2 [4,6) ms. Link R->M: op2 units 2..3 over [6,8) ms. Output at 8 ms.
  const auto rep = evaluate_makespan(g, prof, link, p);
  EXPECT_NEAR(rep.T, 8e-3, 1e-12);
  EXPECT_NEAR(*rep.s_r[g.index_of(1)], 2e-3, 1e-12);
  EXPECT_NEAR(*rep.s_m[g.index_of(2)], 4e-3, 1e-12);
  EXPECT_NEAR(*rep.s_r[g.index_of(2)], 4e-3, 1e-12);
  ASSERT_EQ(rep.transfers.size(), 2u);
  EXPECT_EQ(simulate(g, prof, link, p).makespan, rep.T);
}

TEST(Evaluate, MonotoneInBandwidth) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto g = build_graph(random_chain(seed));
    const auto prof = random_profile(g, seed);
    const auto plan = plan_server_only(g);
    double prev = std::numeric_limits<double>::infinity();
    for (double mbps : {0.5, 1.0, 4.0, 16.0, 64.0}) {
      const double T = evaluate_makespan(g, prof, LinkModel::from_mbps(mbps, 1e-4), plan).T;
      EXPECT_LE(T, prev);
      prev = T;
    }
  }
}

TEST(LayerPartition, EndpointsAndInteriorOptimum) {
  const auto g = build_graph(chain({ew(1, 1, 1e3), ew(2, 1, 1e3), ew(3, 1, 1e3)}, 1e6));
  ProfileTable prof;
  prof.costs.assign(g.size(), {});
  prof.costs[g.index_of(1)] = {DeviceCost{0, 1e-3}, DeviceCost{0, 1e-3}};
  prof.costs[g.index_of(2)] = {DeviceCost{0, 1e-1}, DeviceCost{0, 1e-3}};
  prof.costs[g.index_of(3)] = {DeviceCost{0, 1e-1}, DeviceCost{0, 1e-3}};
  default_edge_bytes(g, prof);
  const LinkModel link = LinkModel::from_mbps(8);
  const auto ops = g.operator_order();
  EXPECT_EQ(evaluate_makespan(g, prof, link, plan_layer_split(g, 0)).T,
            evaluate_makespan(g, prof, link, plan_server_only(g)).T);
  EXPECT_EQ(evaluate_makespan(g, prof, link, plan_layer_split(g, ops.size())).T,
            evaluate_makespan(g, prof, link, plan_device_only(g)).T);
  const auto best = best_layer_partition(g, prof, link);
  EXPECT_EQ(best.split, 1u);
  EXPECT_LT(best.report.T, evaluate_makespan(g, prof, link, plan_device_only(g)).T);
  EXPECT_LT(best.report.T, evaluate_makespan(g, prof, link, plan_server_only(g)).T);
}

TEST(SolveLoss, ZeroBandwidthGivesDeviceOnly) {
  const auto g = build_graph(random_chain(3));
  const auto prof = random_profile(g, 3);
  EXPECT_EQ(solve_loss(g, prof, LinkModel::from_mbps(0), quick()).plan, plan_device_only(g));
}

TEST(SolveLoss, MatchesBruteForceOnThreeByFour) {
  // Every plan is feasible here (outputs never exceed the input), so the
  // oracle enumerates all (a, b) pairs directly.
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const auto g = build_graph(chain({ew(1, 4, 2.0), ew(2, 4, 2.0), ew(3, 4, 2.0)}, 16.0));
    const auto prof = random_profile(g, seed);
    const LinkModel link = LinkModel::from_mbps(0.02 * static_cast<double>(seed), 2e-4);
    double best = std::numeric_limits<double>::infinity();
    std::vector<Units> a(3), b(3);
    for (int code = 0; code < 15 * 15 * 15; ++code) {
      int c = code;
      bool ok = true;
      for (int k = 0; k < 3; ++k) {
        const int pair = c % 15;
        c /= 15;
        // pairs (a, b) with 0 <= b <= a <= 4, in a fixed order
        int idx = 0;
        for (Units aa = 0; aa <= 4; ++aa) {
          for (Units bb = 0; bb <= aa; ++bb, ++idx) {
            if (idx == pair) {
              a[k] = aa;
              b[k] = bb;
            }
          }
        }
        ok = ok && pair < 15;
      }
      if (!ok) continue;
      best = std::min(best, evaluate_makespan(g, prof, link, SchedulePlan::from_splits(g, a, b)).T);
    }
    const auto res = solve_loss(g, prof, link, DEConfig{});
    EXPECT_DOUBLE_EQ(res.makespan, best) << "seed " << seed;
  }
}

TEST(SolveLoss, DominatesBaselinesAndIsDeterministic) {
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    const auto g = build_graph(random_dag(seed));
    const auto prof = random_profile(g, seed);
    const LinkModel link = LinkModel::from_mbps(0.05 * static_cast<double>(seed), 1e-4);
    const auto res = solve_loss(g, prof, link, quick(seed));
    EXPECT_TRUE(is_feasible(g, res.plan).ok());
    EXPECT_EQ(evaluate_makespan(g, prof, link, res.plan).T, res.makespan);
    const double dev = evaluate_makespan(g, prof, link, plan_device_only(g)).T;
    const double srv = evaluate_makespan(g, prof, link, plan_server_only(g)).T;
    EXPECT_LE(res.makespan, std::min(dev, srv));
    const auto lp = best_layer_partition(g, prof, link);
    if (is_feasible(g, plan_layer_split(g, lp.split)).ok()) EXPECT_LE(res.makespan, lp.report.T);
    EXPECT_EQ(solve_loss(g, prof, link, quick(seed)).plan, res.plan);
  }
}

TEST(SolveLoss, ConfigValidation) {
  DEConfig c;
  c.population = 3;
  EXPECT_THROW(c.validate(), Error);
  c = DEConfig{};
  c.differential_weight = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = DEConfig{};
  c.crossover_rate = 1.5;
  EXPECT_THROW(c.validate(), Error);
}

TEST(PlanTable, BucketsLookupAndHash) {
  const auto g = build_graph(random_chain(9));
  const auto prof = random_profile(g, 9);
  const auto t = build_plan_table(g, prof, 1.0, 50.0, quick(), 0.0, 3);
  ASSERT_EQ(t.plans.size(), 51u);
  EXPECT_EQ(t.plans[0], plan_device_only(g));
  for (double b : {0.0, 0.4, 1.0, 7.9, 49.99, 50.0, 80.0}) {
    EXPECT_EQ(&t.lookup(b), &t.plans[static_cast<std::size_t>(std::floor(std::min(b, 50.0) / 1.0))]);
  }
  const auto again = build_plan_table(g, prof, 1.0, 50.0, quick(), 0.0, 1);
  EXPECT_EQ(again.content_hash, t.content_hash);
  EXPECT_EQ(again.plans, t.plans);
  EXPECT_NE(build_plan_table(g, prof, 1.0, 50.0, quick(2), 0.0, 2).content_hash, t.content_hash);

  const auto text = plan_table_to_json(g, t).dump();
  const auto back = plan_table_from_json(g, json::parse(text));
  EXPECT_EQ(back.plans, t.plans);
  EXPECT_EQ(back.content_hash, t.content_hash);
}
