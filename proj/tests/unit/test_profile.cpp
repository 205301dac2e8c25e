#include <gtest/gtest.h>

#include <cmath>

#include <intradp/models.hpp>

using namespace intradp;

namespace {

ModelGraph small_graph() {
  return build_graph({{"raw_input_bytes", 16.0},
                      {"nodes",
                       {{{"id", 1}, {"op", "relu"}, {"in_units", 4}, {"out_units", 4}, {"out_bytes_per_unit", 4.0}},
                        {{"id", 2}, {"op", "relu"}, {"in_units", 4}, {"out_units", 4}, {"out_bytes_per_unit", 4.0}}}},
                      {"edges", {{1, 2}}}});
}

}  // namespace

TEST(ComputeTime, AffineInCount) {
  const auto g = small_graph();
  ProfileTable p;
  p.costs.assign(g.size(), {});
  const auto v = g.index_of(1);
  p.costs[v][0] = {1e-3, 2e-3};
  EXPECT_EQ(compute_time(p, g, Device::M, v, 0), 0.0);
  EXPECT_NEAR(compute_time(p, g, Device::M, v, 4), 9e-3, 1e-15);
  EXPECT_EQ(compute_time(p, g, Device::M, g.input_index(), 4), 0.0);
  EXPECT_EQ(compute_time(p, g, Device::M, g.output_index(), 4), 0.0);
  EXPECT_THROW(compute_time(p, g, Device::M, 99, 1), Error);
  double prev = 0.0;
  for (Units c = 0; c <= 4; ++c) {
    const double t = compute_time(p, g, Device::M, v, c);
    EXPECT_GE(t, prev);
    prev = t;
  }
}

TEST(TxTime, Examples) {
  EXPECT_EQ(tx_time(LinkModel::from_mbps(80, 1e-3), 0.0), 0.0);
  EXPECT_NEAR(tx_time(LinkModel::from_mbps(80, 1e-3), 1e6), 0.101, 1e-12);
  EXPECT_TRUE(std::isinf(tx_time(LinkModel::from_mbps(0), 1.0)));
  double prev = std::numeric_limits<double>::infinity();
  for (double mbps : {1.0, 2.0, 10.0, 55.5, 200.0}) {
    const double t = tx_time(LinkModel::from_mbps(mbps, 2e-3), 5000.0);
    EXPECT_LT(t, prev);
    prev = t;
  }
}

TEST(SynthProfile, DeterministicAndScaledByRatio) {
  const auto g = build_graph(vgg_like_model());
  SynthParams sp;
  sp.speed_ratio = 10.0;
  const auto a = synth_profile(g, sp, 3);
  const auto b = synth_profile(g, sp, 3);
  EXPECT_EQ(a, b);
  for (auto v : g.operator_order()) {
    EXPECT_DOUBLE_EQ(a.cost(Device::R, v).per_unit_s, a.cost(Device::M, v).per_unit_s / 10.0);
  }
  sp.speed_ratio = 1.0;
  const auto c = synth_profile(g, sp, 3);
  for (auto v : g.operator_order()) EXPECT_EQ(c.cost(Device::R, v), c.cost(Device::M, v));
  EXPECT_NE(synth_profile(g, sp, 4), c);
}

TEST(ProfileJson, RoundTripIsExact) {
  const auto g = build_graph(vgg_like_model());
  const auto p = synth_profile(g, vgg_profile_params(), 9);
  const auto text = profile_to_json(g, p).dump();
  EXPECT_EQ(profile_from_json(g, json::parse(text)), p);
}

TEST(ProfileJson, MissingNodeIsASchemaViolation) {
  const auto g = small_graph();
  json doc = {{"nodes", {{{"id", 1}, {"m", {{"overhead_s", 0}, {"per_unit_s", 0}}},
                          {"r", {{"overhead_s", 0}, {"per_unit_s", 0}}}}}}};
  try {
    profile_from_json(g, doc);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SchemaViolation);
  }
}
