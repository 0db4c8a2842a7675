#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <mutex>
#include <sstream>

#include "ringtrain/engine.hpp"

using namespace ringtrain;

namespace {

NetProfile quiet_net() {
  NetProfile p;
  p.base_bandwidth_mbps = 940;
  p.latency_ms = 0.4;
  return p;
}

TrainingConfig small_cfg(int k, int B = 32) {
  TrainingConfig c;
  c.global_batch = B;
  c.workers = 1;
  c.per_device_batch = B;
  c.base_lr = 0.05;
  c.iterations = 100;
  c.seed = 7;
  return c.with_workers(k);
}

}  // namespace

TEST(Shard, ExampleIndices) {
  EXPECT_EQ(shard_indices(100, 3, 2, 4, 2), (std::vector<std::size_t>{28, 29}));
}

TEST(Shard, UnionIsTheGlobalBatch) {
  const std::size_t N = 50;
  for (long long it : {0LL, 1LL, 7LL}) {
    const auto full = shard_indices(N, it, 0, 1, 24);
    std::vector<std::size_t> cat;
    for (int r = 0; r < 4; ++r) {
      const auto s = shard_indices(N, it, r, 4, 6);
      cat.insert(cat.end(), s.begin(), s.end());
    }
    EXPECT_EQ(cat, full);
  }
}

TEST(LrScaling, Examples) {
  EXPECT_NEAR(scale_lr(0.01, 23, 1, LrScaling::linear), 0.23, 1e-15);
  EXPECT_EQ(scale_lr(0.01, 23, 1, LrScaling::none), 0.01);
  EXPECT_EQ(scale_lr(0.01, 32, 32, LrScaling::linear), 0.01);
  EXPECT_THROW(scale_lr(0.01, 0, 1), ConfigError);
}

TEST(Config, Validation) {
  auto c = small_cfg(4);
  EXPECT_NO_THROW(c.validate());
  c.iterations = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_cfg(4);
  c.per_device_batch = 7;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(small_cfg(1).with_workers(5), ConfigError);
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  auto c = small_cfg(4);
  c.aggregation = Aggregation::ring_chunkwise;
  c.hidden = {5, 6};
  nlohmann::json j = c;
  const auto back = j.get<TrainingConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  j["bogus"] = 1;
  EXPECT_THROW(j.get<TrainingConfig>(), ConfigError);
  EXPECT_EQ(parse_aggregation("tree_packed"), Aggregation::tree_packed);
  EXPECT_THROW(parse_aggregation("star"), ConfigError);
}

TEST(Engine, SingleWorkerMatchesHandWrittenSgdBitwise) {
  auto cfg = small_cfg(1);
  cfg.iterations = 5;
  const auto res = train_single(cfg);
  const auto ds = make_dataset(cfg);
  RealModel m(mlp_layers(cfg.layer_dims()), cfg.seed);
  for (int it = 0; it < cfg.iterations; ++it) {
    auto [x, y] = shard_batch(ds, it, 0, 1, cfg.global_batch);
    auto f = forward(m, x, y);
    sgd_update(m, backward(m, f.cache), static_cast<float>(cfg.base_lr),
               static_cast<float>(cfg.weight_decay));
  }
  ASSERT_EQ(res.weights.size(), m.weights().size());
  for (std::size_t i = 0; i < m.weights().size(); ++i)
    EXPECT_EQ(res.weights[i].storage(), m.weights()[i].storage());
}

TEST(Engine, SimSingleWorkerMatchesSolo) {
  auto cfg = small_cfg(1);
  cfg.iterations = 10;
  const auto a = train_single(cfg);
  const auto b = train_sim(cfg, quiet_net());
  EXPECT_EQ(weights_checksum(a.weights), weights_checksum(b[0].weights));
}

TEST(Engine, MultiWorkerMatchesSingleWorker) {
  const auto ref = train_single(small_cfg(1));
  for (int k : {2, 4, 8})
    for (auto agg : {Aggregation::ring_packed, Aggregation::tree_packed, Aggregation::ring_chunkwise}) {
      auto cfg = small_cfg(k);
      cfg.aggregation = agg;
      const auto res = train_sim(cfg, quiet_net());
      EXPECT_LE(max_relative_diff(ref.weights, res[0].weights), 1e-4)
          << "K=" << k << " " << to_string(agg);
    }
}

TEST(Engine, TcpMatchesSimBitwise) {
  auto cfg = small_cfg(4);
  cfg.iterations = 30;
  const auto sim = train_sim(cfg, quiet_net());
  const auto tcp = train_tcp_local(cfg);
  for (int r = 0; r < 4; ++r) EXPECT_EQ(weights_checksum(sim[r].weights), weights_checksum(tcp[r].weights));
}

TEST(Engine, ReplicasStayIdenticalEveryStep) {
  auto cfg = small_cfg(4);
  cfg.iterations = 20;
  std::mutex mu;
  std::map<int, std::vector<std::uint64_t>> sums;
  train_sim(cfg, quiet_net(), [&](const Worker& w, const IterationMetrics& m) {
    std::lock_guard lk(mu);
    sums[m.iter].push_back(weights_checksum(w.model().weights()));
  });
  ASSERT_EQ(sums.size(), 20u);
  for (const auto& [it, v] : sums) {
    ASSERT_EQ(v.size(), 4u);
    for (auto s : v) EXPECT_EQ(s, v[0]) << "iteration " << it;
  }
}

TEST(Engine, AggregatedIsMeanOfLocal) {
  auto cfg = small_cfg(3, 24);
  cfg.iterations = 5;
  std::mutex mu;
  std::map<int, std::vector<GradientSet>> local;
  std::map<int, std::vector<GradientSet>> agg;
  train_sim(cfg, quiet_net(), [&](const Worker& w, const IterationMetrics& m) {
    std::lock_guard lk(mu);
    local[m.iter].push_back(w.local_gradients());
    agg[m.iter].push_back(w.aggregated_gradients());
  });
  for (int it = 0; it < 5; ++it)
    for (const auto& a : agg[it])
      for (std::size_t c = 0; c < a.chunks.size(); ++c)
        for (std::size_t i = 0; i < a.chunks[c].size(); ++i) {
          double mean = 0;
          for (const auto& l : local[it]) mean += l.chunks[c][i];
          mean /= 3;
          EXPECT_NEAR(a.chunks[c][i], mean, 1e-6);
        }
}

TEST(Engine, DuplicatedShardsAggregateToLocal) {
  // dataset of size B where sample i and i+b coincide, so both ranks see
  // the same shard
  auto cfg = small_cfg(2, 16);
  cfg.dataset_size = 16;
  cfg.iterations = 3;
  auto ds = make_dataset(cfg);
  for (std::size_t i = 8; i < 16; ++i) {
    for (std::size_t d = 0; d < ds.dim(); ++d) ds.inputs.at(i, d) = ds.inputs.at(i - 8, d);
    ds.labels[i] = ds.labels[i - 8];
  }
  std::mutex mu;
  run_simulated(2, quiet_net(), [&](int, Transport& t) {
    run_training(cfg, t, ds, [&](const Worker& w, const IterationMetrics&) {
      std::lock_guard lk(mu);
      const auto& l = w.local_gradients();
      const auto& a = w.aggregated_gradients();
      for (std::size_t c = 0; c < l.chunks.size(); ++c)
        for (std::size_t i = 0; i < l.chunks[c].size(); ++i)
          EXPECT_NEAR(a.chunks[c][i], l.chunks[c][i], 1e-6);
    });
  });
}

TEST(Engine, LossDecreasesOnSeparableData) {
  TrainingConfig c;
  c.classes = 2;
  c.global_batch = c.per_device_batch = 32;
  c.base_lr = 0.1;
  c.iterations = 200;
  c.seed = 3;
  c = c.with_workers(4);
  const auto res = train_sim(c, quiet_net());
  const auto& m = res[0].metrics;
  double first = 0, last = 0;
  for (int i = 0; i < 10; ++i) {
    first += m[i].loss;
    last += m[m.size() - 1 - i].loss;
  }
  EXPECT_LT(last, 0.5 * first);
}

TEST(Engine, MetricsShapeAndTimeAccounting) {
  auto cfg = small_cfg(4);
  cfg.iterations = 12;
  std::vector<double> clocks(4);
  std::vector<RankResult> res(4);
  const auto ds = make_dataset(cfg);
  run_simulated(4, quiet_net(), [&](int r, Transport& t) {
    res[r] = run_training(cfg, t, ds);
    clocks[r] = t.clock();
  });
  for (int r = 0; r < 4; ++r) {
    ASSERT_EQ(res[r].metrics.size(), 12u);
    double sum = 0;
    for (const auto& m : res[r].metrics) {
      EXPECT_EQ(m.rank, r);
      EXPECT_GE(m.t_comp, 0);
      EXPECT_GE(m.t_comm, 0);
      EXPECT_TRUE(std::isfinite(m.loss));
      sum += m.t_comp + m.t_comm;
    }
    EXPECT_NEAR(sum, clocks[r], 1e-9);
    EXPECT_NEAR(res[r].metrics[0].t_comp, 8 * cfg.sim_seconds_per_sample, 1e-12);
  }
}

TEST(Engine, RealTimingWithinWallClock) {
  auto cfg = small_cfg(2);
  cfg.iterations = 5;
  WallClock wall;
  const auto res = train_tcp_local(cfg);
  const double elapsed = wall.seconds();
  for (const auto& r : res) {
    double sum = 0;
    for (const auto& m : r.metrics) sum += m.t_comp + m.t_comm;
    EXPECT_LE(sum, elapsed);
  }
}

TEST(Engine, CommFailureNamesRankPhaseAndIteration) {
  auto cfg = small_cfg(4);
  auto net = quiet_net();
  net.disconnect_prob = 0.05;
  try {
    train_sim(cfg, net);
    FAIL() << "expected a failure";
  } catch (const CommError& e) {
    const std::string w = e.what();
    EXPECT_NE(w.find("rank"), std::string::npos);
    EXPECT_NE(w.find("iteration"), std::string::npos);
    EXPECT_NE(w.find("allreduce"), std::string::npos);
  }
}

TEST(Engine, MetricsCsvFormat) {
  std::ostringstream os;
  write_metrics_csv(os, {{0, 1, 0.5, 0.25, 1.0986}});
  EXPECT_EQ(os.str(), "iter,rank,t_comp_s,t_comm_s,loss\n0,1,0.5,0.25,1.0986\n");
}

TEST(Engine, TransportSizeMustMatchConfig) {
  SoloTransport s;
  const auto cfg = small_cfg(2);
  const auto ds = make_dataset(cfg);
  EXPECT_THROW(Worker(cfg, s, ds), ConfigError);
}
