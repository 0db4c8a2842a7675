#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ringtrain/harness/calibration.hpp"
#include "ringtrain/harness/experiments.hpp"

using namespace ringtrain;

namespace {

const std::string kPresets = RINGTRAIN_PRESETS;

NetProfile ethernet() { return load_net_profile(kPresets + "/ethernet.json"); }
NetProfile wifi() { return load_net_profile(kPresets + "/wifi5.json"); }
ComputeProfile compute() { return load_compute_profile(kPresets + "/compute_s10.json"); }
ThermalModel thermal() { return load_thermal_model(kPresets + "/thermal_s10.json"); }

NetProfile bare(double latency_ms = 0.0) {
  NetProfile p;
  p.base_bandwidth_mbps = 940;
  p.latency_ms = latency_ms;
  return p;
}

std::vector<int> pow2(int hi) {
  std::vector<int> v;
  for (int k = 1; k <= hi; k *= 2) v.push_back(k);
  return v;
}

std::string csv(const ExperimentReport& r) {
  std::ostringstream os;
  write_csv(os, r);
  return os.str();
}

}  // namespace

TEST(Iteration, SingleWorkerHasNoComm) {
  const auto m = build_profile("GoogleNet");
  const auto it = simulate_iteration(m, 16, compute(), nullptr, 1, ethernet(), Aggregation::ring_packed);
  EXPECT_EQ(it.t_comm, 0.0);
  EXPECT_EQ(efficiency(it.t_comp, it.t_comm), 1.0);
}

TEST(Iteration, DoublingThroughputHalvesCompute) {
  const auto m = build_profile("GoogleNet");
  auto cp = compute();
  const double a = simulate_iteration(m, 16, cp, nullptr, 4, ethernet(), Aggregation::ring_packed).t_comp;
  cp.throughput *= 2;
  const double b = simulate_iteration(m, 16, cp, nullptr, 4, ethernet(), Aggregation::ring_packed).t_comp;
  EXPECT_DOUBLE_EQ(a, 2 * b);
}

TEST(Iteration, GoogleNetSixteenToThirtyTwo) {
  const auto m = build_profile("GoogleNet");
  const auto cp = compute();
  const auto a = simulate_iteration(m, 2, cp, nullptr, 16, ethernet(), Aggregation::tree_packed);
  const auto b = simulate_iteration(m, 1, cp, nullptr, 32, ethernet(), Aggregation::tree_packed);
  EXPECT_DOUBLE_EQ(a.t_comp, 2 * b.t_comp);
  EXPECT_GT(b.t_comm, a.t_comm);
}

TEST(Iteration, RejectsBadBatch) {
  EXPECT_THROW(simulate_iteration(build_profile("AlexNet"), 0, compute(), nullptr, 2, ethernet(),
                                  Aggregation::ring_packed),
               ConfigError);
}

TEST(Scaling, SingleKGivesOneFullyEfficientRow) {
  const auto r = run_scaling_experiment(build_profile("GoogleNet"), 32, {1}, ethernet(), compute());
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].eff(), 1.0);
}

TEST(Scaling, GoogleNetFixedBatch) {
  const auto r = run_scaling_experiment(build_profile("GoogleNet"), 32, pow2(32), ethernet(), compute());
  EXPECT_TRUE(r.ok());
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    EXPECT_NEAR(r.rows[i].t_comp, r.rows[i - 1].t_comp / 2, 0.05 * r.rows[i - 1].t_comp / 2);
    EXPECT_GE(r.rows[i].t_comm, r.rows[i - 1].t_comm);
  }
  EXPECT_TRUE(r.derived.at("total_32_exceeds_16").get<bool>());
}

TEST(Scaling, IndivisibleKRejected) {
  EXPECT_THROW(run_scaling_experiment(build_profile("GoogleNet"), 32, {3}, ethernet(), compute()),
               ConfigError);
}

TEST(Collective, ZeroBytesCostsLatencyOnly) {
  const auto net = bare(0.5);
  for (int k : {2, 5, 16}) {
    EXPECT_NEAR(collective_bench_time(0, k, net, Algorithm::ring, kDefaultTreeSegmentBytes),
                2 * (k - 1) * 0.5e-3, 1e-12);
    const int H = binomial_shape(k).height[0];
    EXPECT_NEAR(collective_bench_time(0, k, net, Algorithm::tree, kDefaultTreeSegmentBytes),
                2 * H * 0.5e-3, 1e-12);
  }
}

TEST(Collective, AnchorSizeRequired) {
  EXPECT_THROW(run_collective_bench({1024}, {2, 16}, {{"eth", ethernet()}}, {Algorithm::ring}),
               ConfigError);
}

TEST(Collective, ContentionSlowdowns) {
  const auto r = run_collective_bench({kAnchorBytes}, {2, 4, 8, 16},
                                      {{"wifi", wifi()}, {"ethernet", ethernet()}},
                                      {Algorithm::tree});
  const auto& s = r.derived.at("slowdown");
  const double w = s.at(payload_label("wifi", kAnchorBytes) + "/tree/K2->16").get<double>();
  const double e = s.at(payload_label("ethernet", kAnchorBytes) + "/tree/K2->16").get<double>();
  EXPECT_NEAR(w, 63, 0.2 * 63);
  EXPECT_LE(e, 1.5);
  EXPECT_EQ(r.rows.size(), 8u);
}

TEST(Collective, TimeGrowsWithPayload) {
  const auto net = ethernet();
  double last = -1;
  for (std::size_t b : {0ul, 1ul << 10, 1ul << 20, 1ul << 24, std::size_t{kAnchorBytes}}) {
    const double t = collective_bench_time(b, 8, net, Algorithm::ring, kDefaultTreeSegmentBytes);
    EXPECT_GT(t, last);
    last = t;
  }
}

TEST(Aggregation, ChunkwiseGrowsWithChunkCount) {
  double last = -1;
  for (int c : {1, 10, 100, 500}) {
    const auto m = make_profile("x", 50, c, 4);
    const double t = simulate_comm(m, 8, ethernet(), compute(), Aggregation::ring_chunkwise);
    EXPECT_GT(t, last) << c << " chunks";
    last = t;
  }
}

TEST(Aggregation, PaperRatiosAndWinners) {
  const auto r = run_aggregation_comparison(all_profiles(), 138, ethernet(), compute());
  const double ratio = r.derived.at("chunkwise_ratio_inception_v3_to_resnet_50").get<double>();
  EXPECT_NEAR(ratio, 84.0 / 47.0, 0.25 * 84.0 / 47.0);
  const auto& w = r.derived.at("faster_ring_variant");
  for (const auto& [model, v] : w.items())
    EXPECT_EQ(v.get<std::string>(), model == "AlexNet" ? "ring_chunkwise" : "ring_packed") << model;
  EXPECT_LE(r.row("AlexNet", 138, "ring_chunkwise").t_comm, 1.1 * r.row("AlexNet", 138, "ring_packed").t_comm);
  EXPECT_EQ(r.rows.size(), 30u);
}

TEST(Efficiency, TenProfilesAtK138) {
  const auto r = run_efficiency_sweep(138, ethernet(), compute());
  ASSERT_EQ(r.rows.size(), 10u);
  EXPECT_TRUE(r.ok());
  for (const auto& row : r.rows) {
    EXPECT_GT(row.eff(), 0.0);
    EXPECT_LE(row.eff(), 1.0);
  }
  EXPECT_EQ(r.derived["max"]["model"], "SequeezeNet-v1.1");
  EXPECT_EQ(r.derived["min"]["model"], "ResNet-152");
  EXPECT_NEAR(r.derived["max"]["efficiency"].get<double>(), 0.858, 0.10);
  EXPECT_NEAR(r.derived["min"]["efficiency"].get<double>(), 0.122, 0.10);
}

TEST(Efficiency, DecreasesWithModelSizeAtFixedCompute) {
  const auto cp = compute();
  double last = 2;
  for (double mb : {1.0, 10.0, 50.0, 200.0}) {
    const auto m = make_profile("x", mb, 10, 8);
    const auto it = simulate_iteration(m, 8, cp, nullptr, 16, ethernet(), Aggregation::ring_packed);
    const double e = efficiency(it.t_comp, it.t_comm);
    EXPECT_LT(e, last);
    last = e;
  }
}

TEST(RingLimit, BandwidthOptimalAtLargeK) {
  auto net = bare(0.0);
  const std::size_t n = 25'000'000;
  LinkSampler link(net);
  const double t = collective_time(Algorithm::ring, n, 138, link);
  const double limit = 2.0 * n * 4 * 8 / (1e6 * net.base_bandwidth_mbps);
  EXPECT_NEAR(t, limit, 0.05 * limit);
}

TEST(RarVsTree, KOneAndKFortySix) {
  const auto r = run_rar_vs_tree(build_profile("ResNet-152"), {1, 46}, ethernet(), compute());
  const auto& s = r.derived.at("speedup_ring_over_tree");
  EXPECT_EQ(s.at("1").get<double>(), 1.0);
  EXPECT_EQ(r.row("ResNet-152", 1, "ring_packed").t_comm, 0.0);
  const double sp = s.at("46").get<double>();
  EXPECT_GE(sp, 1.0);
  EXPECT_LE(sp, 2.0);
  EXPECT_LT(r.row("ResNet-152", 46, "ring_packed").t_comm, r.row("ResNet-152", 46, "tree_packed").t_comm);
}

TEST(RarVsTree, RingSendsFewerBytesThanTreeRoot) {
  const std::size_t n = build_profile("ResNet-152").total_elements();
  for (int k = 3; k <= 138; ++k) EXPECT_LT(ring_bytes_per_node(n, k), tree_root_bytes(n, k)) << k;
}

TEST(Thermal, PresetGivesTwoSteps) {
  const auto r = run_thermal_scenario("GoogleNet", 600, thermal(), false);
  EXPECT_TRUE(r.ok());
  EXPECT_EQ(r.derived["upward_steps"].get<int>(), 2);
  const auto lv = r.derived["t_comp_levels"];
  ASSERT_EQ(lv.size(), 3u);
  EXPECT_NEAR(lv[0].get<double>(), 18.2, 1e-9);
  EXPECT_NEAR(lv[1].get<double>(), 20.9, 0.05);
  EXPECT_NEAR(lv[2].get<double>(), 24.8, 0.05);
}

TEST(Thermal, FanSuppressesSecondTier) {
  const auto r = run_thermal_scenario("GoogleNet", 600, thermal(), true);
  EXPECT_EQ(r.derived["upward_steps"].get<int>(), 1);
  EXPECT_LT(r.derived["peak_temp_c"].get<double>(), thermal().tiers.at(1).threshold_c);
}

TEST(Thermal, NoHeatMeansConstantCompute) {
  auto t = thermal();
  t.heat_rate = 0;
  const auto r = run_thermal_scenario("GoogleNet", 600, t, false);
  EXPECT_EQ(r.derived["upward_steps"].get<int>(), 0);
  for (const auto& s : r.series) EXPECT_EQ(s.t_comp, 18.2);
}

TEST(Thermal, InfiniteCoolingPinsAmbient) {
  auto t = thermal();
  t.cool_rate = std::numeric_limits<double>::infinity();
  const auto r = run_thermal_scenario("GoogleNet", 600, t, false);
  EXPECT_EQ(r.derived["upward_steps"].get<int>(), 0);
  for (const auto& s : r.series) EXPECT_EQ(s.temp_c, t.ambient_c);
  nlohmann::json j = t;
  EXPECT_TRUE(j["cool_rate"].is_null());
  EXPECT_TRUE(std::isinf(j.get<ThermalModel>().cool_rate));
}

TEST(Thermal, NeverBelowAmbientAndMonotoneMultiplier) {
  const auto t = thermal();
  ThermalState s(t);
  for (int i = 0; i < 200; ++i) {
    s.advance(3.0, i % 3 == 0);
    EXPECT_GE(s.temp(), t.ambient_c);
  }
  double last = 0;
  for (double temp = 0; temp < 120; temp += 0.5) {
    EXPECT_GE(t.multiplier(temp), last);
    last = t.multiplier(temp);
  }
}

TEST(Thermal, ZeroCoolingHeatsLinearly) {
  auto t = thermal();
  t.cool_rate = 0;
  ThermalState s(t);
  s.advance(10, true);
  EXPECT_DOUBLE_EQ(s.temp(), t.ambient_c + 10 * t.heat_rate);
  s.advance(10, false);
  EXPECT_DOUBLE_EQ(s.temp(), t.ambient_c + 10 * t.heat_rate);
}

TEST(Thermal, RejectsBadTiers) {
  auto t = thermal();
  std::swap(t.tiers[0], t.tiers[1]);
  EXPECT_THROW(t.validate(), ConfigError);
}

TEST(Determinism, SameSeedSameCsv) {
  auto w = wifi();
  const auto a = run_collective_bench({kAnchorBytes, 1 << 20}, {2, 8, 16}, {{"wifi", w}},
                                      {Algorithm::ring, Algorithm::tree});
  const auto b = run_collective_bench({kAnchorBytes, 1 << 20}, {2, 8, 16}, {{"wifi", w}},
                                      {Algorithm::ring, Algorithm::tree});
  EXPECT_EQ(csv(a), csv(b));
  EXPECT_EQ(sidecar(a).dump(), sidecar(b).dump());
  w.seed += 1;
  const auto c = run_collective_bench({kAnchorBytes, 1 << 20}, {2, 8, 16}, {{"wifi", w}},
                                      {Algorithm::ring, Algorithm::tree});
  EXPECT_NE(csv(a), csv(c));
}

TEST(Determinism, CellsIndependentOfRowOrder) {
  const auto a = run_rar_vs_tree(build_profile("ResNet-50"), {4, 46}, wifi(), compute());
  const auto b = run_rar_vs_tree(build_profile("ResNet-50"), {46}, wifi(), compute());
  EXPECT_EQ(a.row("ResNet-50", 46, "ring_packed").t_comm, b.row("ResNet-50", 46, "ring_packed").t_comm);
}

TEST(Report, CsvHeaderAndFormatting) {
  ExperimentReport r;
  r.rows.push_back({"scaling", "sim", "GoogleNet", 4, "tree_packed", 1.5, 0.5});
  EXPECT_EQ(csv(r),
            "experiment,mode,model,K,alg,t_comp_s,t_comm_s,t_total_s,efficiency\n"
            "scaling,sim,GoogleNet,4,tree_packed,1.5,0.5,2,0.75\n");
}

TEST(Calibration, ShippedPresetsMatchFreshFit) {
  const auto cp = compute();
  const auto c = calibrate(ethernet(), wifi(), cp);
  EXPECT_NEAR(wifi().contention_coeff, c.contention_coeff, 1e-6 * c.contention_coeff);
  EXPECT_NEAR(cp.invocation_overhead_s, c.invocation_overhead_s, 1e-6 * c.invocation_overhead_s);
  EXPECT_NEAR(cp.throughput, c.throughput, 1e-6 * c.throughput);
}

TEST(Calibration, BisectionFindsRoot) {
  const double x = bisect_increasing([](double v) { return v * v; }, 2.0, 0, 10, 100);
  EXPECT_NEAR(x, std::sqrt(2.0), 1e-12);
}
