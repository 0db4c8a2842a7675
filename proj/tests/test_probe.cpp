#include <gtest/gtest.h>

#include <thread>

#include "ringtrain/probe.hpp"

using namespace ringtrain;

TEST(Probe, SimMatchesBaseBandwidth) {
  NetProfile p;
  p.base_bandwidth_mbps = 940;
  const auto r = probe_sim(p, 10.0);
  EXPECT_FALSE(r.partial);
  EXPECT_NEAR(r.mbps, 940, 9.4);
}

TEST(Probe, SimJitterGivesSpread) {
  NetProfile p;
  p.base_bandwidth_mbps = 400;
  p.jitter_frac = 0.25;
  p.seed = 3;
  const auto s = probe_sim_repeated(p, 0.2, 5);
  EXPECT_EQ(s.runs.size(), 5u);
  EXPECT_GT(s.std_mbps, 0.0);
  EXPECT_NEAR(s.mean_mbps, 400, 80);
  const auto again = probe_sim_repeated(p, 0.2, 5);
  EXPECT_EQ(again.mean_mbps, s.mean_mbps);
}

TEST(Probe, CertainDisconnectAbortsImmediately) {
  NetProfile p;
  p.disconnect_prob = 1.0;  // constructed directly: file profiles must stay below 1
  const auto r = probe_sim(p, 10.0);
  EXPECT_TRUE(r.partial);
  EXPECT_EQ(r.bytes, 0.0);
  EXPECT_TRUE(probe_sim_repeated(p, 1.0, 3).partial);
  EXPECT_EQ(probe_sim_repeated(p, 1.0, 3).runs.size(), 1u);
}

TEST(Probe, ContentionLowersBandwidth) {
  NetProfile p;
  p.base_bandwidth_mbps = 400;
  p.contention_coeff = 0.5;
  EXPECT_NEAR(probe_sim(p, 1.0, 0, 4).mbps, 200, 2);
}

TEST(Probe, RejectsNonPositiveDuration) {
  EXPECT_THROW(probe_sim(NetProfile{}, 0.0), ConfigError);
}

TEST(Probe, LoopbackPositive) {
  auto [listener, port] = net::listen_tcp("127.0.0.1", 0);
  std::thread server([fd = listener.fd()] { probe_serve(fd, 1, 10.0); });
  const auto r = probe_client("127.0.0.1", port, 0.3);
  server.join();
  EXPECT_FALSE(r.partial);
  EXPECT_GT(r.mbps, 0.0);
  EXPECT_GT(r.bytes, 0.0);
}

TEST(Probe, SummaryStats) {
  std::vector<ProbeResult> runs(3);
  runs[0].mbps = 1;
  runs[1].mbps = 2;
  runs[2].mbps = 3;
  const auto s = summarize(runs);
  EXPECT_DOUBLE_EQ(s.mean_mbps, 2);
  EXPECT_DOUBLE_EQ(s.std_mbps, 1);
}
