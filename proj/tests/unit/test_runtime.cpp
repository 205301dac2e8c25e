#include <gtest/gtest.h>

#include <random>
#include <sstream>
#include <thread>

#include <intradp/models.hpp>
#include <intradp/runtime.hpp>

#include "../support/random_plans.hpp"

using namespace intradp;

namespace {

PlanTable table_of(std::vector<SchedulePlan> plans, std::string hash = "test-table") {
  PlanTable t;
  t.bucket_width_mbps = 1.0;
  t.max_mbps = static_cast<double>(plans.size() - 1);
  t.content_hash = std::move(hash);
  t.plans = std::move(plans);
  return t;
}

ClientConfig to(const Server& s) {
  ClientConfig c;
  c.server = {"127.0.0.1", s.port()};
  c.timeout = std::chrono::seconds(20);
  return c;
}

bool same_bits(const Tensor& a, const Tensor& b) {
  if (a.width != b.width || a.values.size() != b.values.size()) return false;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (std::bit_cast<std::uint32_t>(a.values[i]) != std::bit_cast<std::uint32_t>(b.values[i])) return false;
  }
  return true;
}

}  // namespace

TEST(BandwidthTrace, StepInterpolationAndParsing) {
  EXPECT_EQ(BandwidthTrace({{0.0, 93.0}}).at(12.0), 93.0);
  const BandwidthTrace step({{0.0, 50.0}, {0.5, 10.0}});
  EXPECT_EQ(step.at(0.49), 50.0);
  EXPECT_EQ(step.at(0.5), 10.0);
  EXPECT_EQ(step.at(-1.0), 50.0);
  try {
    BandwidthTrace{}.at(0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyTrace);
  }
  std::istringstream text("t_s,mbps\n# indoor\n0,93\n0.1,88.5\n");
  const auto parsed = BandwidthTrace::parse(text);
  ASSERT_EQ(parsed.samples().size(), 2u);
  EXPECT_EQ(estimate_bandwidth(parsed, 0.15), 88.5);
  EXPECT_THROW(BandwidthTrace({{0.0, 1.0}, {0.0, 2.0}}), Error);
  EXPECT_THROW(BandwidthTrace({{0.0, -1.0}}), Error);
  try {
    BandwidthTrace::load("/nonexistent/trace.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::FileNotFound);
  }
}

TEST(Throttle, PacesToTheConfiguredRate) {
  auto listener = net::listen_on({"127.0.0.1", 0});
  const auto port = net::local_port(listener);
  std::vector<std::uint8_t> got(1'000'000);
  std::thread reader([&] {
    auto s = net::accept_for(listener, std::chrono::seconds(5));
    ASSERT_TRUE(s.has_value());
    net::recv_exact(*s, got, net::Clock::now() + std::chrono::seconds(10));
  });
  auto s = net::connect_to({"127.0.0.1", port});
  std::vector<std::uint8_t> data(1'000'000, 7);
  net::TokenBucket tb(80.0);
  const double secs = net::throttled_send(s, tb, data, net::Clock::now() + std::chrono::seconds(10));
  reader.join();
  EXPECT_GE(secs, 0.1);
  EXPECT_LT(secs, 0.3);
  EXPECT_EQ(got, data);

  net::TokenBucket open;
  EXPECT_TRUE(open.unlimited());
  const auto t0 = net::Clock::now();
  open.acquire(1 << 30, t0 + std::chrono::seconds(1));
  EXPECT_LT(std::chrono::duration<double>(net::Clock::now() - t0).count(), 0.01);

  net::TokenBucket shut(0.0);
  try {
    shut.acquire(1, net::Clock::now() + std::chrono::milliseconds(20));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Timeout);
  }
}

TEST(Loopback, BitExactAcrossPlansIncludingReplication) {
  std::mt19937_64 rng(77);
  ChainOptions opt;
  int replicated = 0;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const auto g = build_graph(random_chain(seed, opt));
    const auto w = synth_weights(g, seed);
    const auto input = random_input(g, seed + 100);
    const Tensor ref = reference_forward(g, w, input).at(g.output_index());
    std::vector<SchedulePlan> plans{plan_device_only(g), plan_server_only(g)};
    for (int i = 0; i < 4; ++i) plans.push_back(test_support::random_feasible_plan(g, rng));
    for (const auto& p : plans) replicated += test_support::has_replication(g, p);
    const auto table = table_of(plans);
    Server server(g, table, w);
    server.start();
    Client client(g, table, w, to(server));
    for (std::size_t k = 0; k < plans.size(); ++k) {
      const auto [out, st] = client.infer(input, static_cast<double>(k));
      EXPECT_EQ(st.bucket, k);
      EXPECT_TRUE(same_bits(out, ref)) << "seed " << seed << " plan " << k;
    }
    server.stop();
    EXPECT_EQ(server.requests_served(), plans.size());
  }
  EXPECT_GT(replicated, 0);
}

TEST(Loopback, DeviceOnlyBucketSendsNoUnits) {
  const auto g = build_graph(random_chain(4));
  const auto w = synth_weights(g, 4);
  const auto input = random_input(g, 5);
  const auto table = table_of({plan_device_only(g), plan_server_only(g)});
  Server server(g, table, w);
  server.start();
  Client client(g, table, w, to(server));
  const auto [out, st] = client.infer(input, 0.0);
  EXPECT_EQ(st.bytes_tx, 0u);
  EXPECT_EQ(st.bytes_rx, 0u);
  const auto [out2, st2] = client.infer(input, 1.0);
  EXPECT_GT(st2.bytes_tx, 0u);
  EXPECT_GT(st2.bytes_rx, 0u);
  EXPECT_TRUE(same_bits(out, out2));
  EXPECT_GT(client.probe_bandwidth(), 0.0);
}

TEST(Loopback, HashMismatchIsReported) {
  const auto g = build_graph(random_chain(4));
  const auto w = synth_weights(g, 4);
  const auto served = table_of({plan_device_only(g)}, "aaaa");
  const auto stale = table_of({plan_device_only(g)}, "bbbb");
  Server server(g, served, w);
  server.start();
  try {
    Client client(g, stale, w, to(server));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::HashMismatch);
  }
}

TEST(Loopback, RequestsAreStatelessAcrossRestarts) {
  const auto g = build_graph(random_dag(6));
  const auto w = synth_weights(g, 6);
  const auto input = random_input(g, 6);
  const Tensor ref = reference_forward(g, w, input).at(g.output_index());
  const auto table = table_of({plan_device_only(g), plan_server_only(g), plan_row_split(g, 0, 2)});
  ASSERT_TRUE(is_feasible(g, table.plans[2]).ok());
  for (int round = 0; round < 2; ++round) {
    Server server(g, table, w);
    server.start();
    const BandwidthTrace trace({{0.0, 2.0}, {1.0, 1.0}});
    for (double now : {0.0, 1.0, 0.5}) {
      const auto [out, st] = run_client({"127.0.0.1", server.port()}, g, table, w, input, trace, now);
      EXPECT_TRUE(same_bits(out, ref));
      EXPECT_EQ(st.bucket, now < 1.0 ? 2u : 1u);
    }
  }
}
