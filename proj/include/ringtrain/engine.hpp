#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ringtrain/collectives.hpp"
#include "ringtrain/dataset.hpp"
#include "ringtrain/errors.hpp"
#include "ringtrain/flat_buffer.hpp"
#include "ringtrain/model.hpp"
#include "ringtrain/net_profile.hpp"
#include "ringtrain/sim_transport.hpp"
#include "ringtrain/tcp_transport.hpp"
#include "ringtrain/transport.hpp"

namespace ringtrain {

enum class Aggregation { ring_packed, tree_packed, ring_chunkwise };
enum class LrScaling { none, linear };

inline const char* to_string(Aggregation a) {
  switch (a) {
    case Aggregation::ring_packed: return "ring_packed";
    case Aggregation::tree_packed: return "tree_packed";
    case Aggregation::ring_chunkwise: return "ring_chunkwise";
  }
  return "?";
}

inline Aggregation parse_aggregation(const std::string& s) {
  if (s == "ring_packed") return Aggregation::ring_packed;
  if (s == "tree_packed") return Aggregation::tree_packed;
  if (s == "ring_chunkwise") return Aggregation::ring_chunkwise;
  throw ConfigError("unknown aggregation '" + s + "'");
}

inline const char* to_string(LrScaling m) { return m == LrScaling::linear ? "linear" : "none"; }

inline LrScaling parse_lr_scaling(const std::string& s) {
  if (s == "none") return LrScaling::none;
  if (s == "linear") return LrScaling::linear;
  throw ConfigError("unknown lr_scaling '" + s + "'");
}

// Linear rule: lr grows with the global batch relative to a reference.
inline double scale_lr(double base_lr, long long B, long long B_ref,
                       LrScaling mode = LrScaling::linear) {
  if (B < 1 || B_ref < 1) throw ConfigError("batch sizes must be >= 1");
  if (mode == LrScaling::none) return base_lr;
  return base_lr * static_cast<double>(B) / static_cast<double>(B_ref);
}

struct TrainingConfig {
  int global_batch = 32;
  int per_device_batch = 32;
  int workers = 1;
  double base_lr = 0.01;
  double weight_decay = 0.0002;
  int iterations = 100;
  std::uint64_t seed = 0;
  Aggregation aggregation = Aggregation::ring_packed;
  LrScaling lr_scaling = LrScaling::none;
  int lr_ref_batch = 32;

  std::size_t input_dim = 8;
  std::vector<std::size_t> hidden{16};
  std::size_t classes = 3;

  std::size_t dataset_size = 1024;
  double blob_spread = 1.0;
  double blob_separation = 4.0;

  // Sim mode only: virtual compute charged per local sample.
  double sim_seconds_per_sample = 1e-3;
  double recv_timeout_s = 30.0;

  std::vector<std::size_t> layer_dims() const {
    std::vector<std::size_t> d{input_dim};
    d.insert(d.end(), hidden.begin(), hidden.end());
    d.push_back(classes);
    return d;
  }

  double learning_rate() const {
    return scale_lr(base_lr, global_batch, lr_ref_batch, lr_scaling);
  }

  void validate() const {
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (per_device_batch < 1) throw ConfigError("per_device_batch must be >= 1");
    if (global_batch != per_device_batch * workers)
      throw ConfigError("global_batch (" + std::to_string(global_batch) +
                        ") must equal per_device_batch * workers (" +
                        std::to_string(per_device_batch) + " * " + std::to_string(workers) + ")");
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (lr_ref_batch < 1) throw ConfigError("lr_ref_batch must be >= 1");
    if (!(base_lr >= 0) || !(weight_decay >= 0)) throw ConfigError("lr and weight_decay must be >= 0");
    if (input_dim == 0 || classes < 2) throw ConfigError("model needs input_dim > 0 and >= 2 classes");
    for (auto h : hidden)
      if (h == 0) throw ConfigError("hidden widths must be > 0");
    if (dataset_size < static_cast<std::size_t>(global_batch))
      throw ConfigError("dataset_size must be >= global_batch");
    if (!(sim_seconds_per_sample >= 0)) throw ConfigError("sim_seconds_per_sample must be >= 0");
    if (!(recv_timeout_s > 0)) throw ConfigError("recv_timeout_s must be > 0");
  }

  // Same config with B kept fixed and the work spread over k workers.
  TrainingConfig with_workers(int k) const {
    TrainingConfig c = *this;
    if (k < 1 || global_batch % k != 0)
      throw ConfigError("global batch " + std::to_string(global_batch) +
                        " is not divisible by " + std::to_string(k));
    c.workers = k;
    c.per_device_batch = global_batch / k;
    return c;
  }
};

inline void to_json(nlohmann::json& j, const TrainingConfig& c) {
  j = nlohmann::json{{"global_batch", c.global_batch},
                     {"per_device_batch", c.per_device_batch},
                     {"workers", c.workers},
                     {"base_lr", c.base_lr},
                     {"weight_decay", c.weight_decay},
                     {"iterations", c.iterations},
                     {"seed", c.seed},
                     {"aggregation", to_string(c.aggregation)},
                     {"lr_scaling", to_string(c.lr_scaling)},
                     {"lr_ref_batch", c.lr_ref_batch},
                     {"input_dim", c.input_dim},
                     {"hidden", c.hidden},
                     {"classes", c.classes},
                     {"dataset_size", c.dataset_size},
                     {"blob_spread", c.blob_spread},
                     {"blob_separation", c.blob_separation},
                     {"sim_seconds_per_sample", c.sim_seconds_per_sample},
                     {"recv_timeout_s", c.recv_timeout_s}};
}

// Missing keys keep their defaults; unknown keys are rejected so typos do
// not silently fall back.
inline void from_json(const nlohmann::json& j, TrainingConfig& c) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  const nlohmann::json known = c;
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw ConfigError("unknown training config key '" + k + "'");
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("global_batch", c.global_batch);
    get("per_device_batch", c.per_device_batch);
    get("workers", c.workers);
    get("base_lr", c.base_lr);
    get("weight_decay", c.weight_decay);
    get("iterations", c.iterations);
    get("seed", c.seed);
    if (j.contains("aggregation")) c.aggregation = parse_aggregation(j.at("aggregation").get<std::string>());
    if (j.contains("lr_scaling")) c.lr_scaling = parse_lr_scaling(j.at("lr_scaling").get<std::string>());
    get("lr_ref_batch", c.lr_ref_batch);
    get("input_dim", c.input_dim);
    get("hidden", c.hidden);
    get("classes", c.classes);
    get("dataset_size", c.dataset_size);
    get("blob_spread", c.blob_spread);
    get("blob_separation", c.blob_separation);
    get("sim_seconds_per_sample", c.sim_seconds_per_sample);
    get("recv_timeout_s", c.recv_timeout_s);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad training config: ") + e.what());
  }
}

inline TrainingConfig load_training_config(const std::string& path) {
  return read_json_file(path).get<TrainingConfig>();
}

inline Dataset make_dataset(const TrainingConfig& c) {
  return make_blobs(c.dataset_size, c.input_dim, c.classes, c.seed, c.blob_spread,
                    c.blob_separation);
}

struct IterationMetrics {
  int iter = 0;
  int rank = 0;
  double t_comp = 0.0;
  double t_comm = 0.0;
  double loss = 0.0;
};

inline std::vector<std::size_t> shard_indices(std::size_t dataset_size, long long iter,
                                              int rank, int k, int b) {
  const auto B = static_cast<unsigned long long>(b) * static_cast<unsigned long long>(k);
  std::vector<std::size_t> idx(static_cast<std::size_t>(b));
  for (int j = 0; j < b; ++j)
    idx[static_cast<std::size_t>(j)] = static_cast<std::size_t>(
        (static_cast<unsigned long long>(iter) * B + static_cast<unsigned long long>(rank * b + j)) %
        dataset_size);
  return idx;
}

// Rank's slice of global batch `iter`: samples (iter*B + rank*b + j) mod N.
inline std::pair<Tensor, Tensor> shard_batch(const Dataset& ds, long long iter, int rank,
                                             int k, int b) {
  const auto idx = shard_indices(ds.size(), iter, rank, k, b);
  Tensor x({idx.size(), ds.dim()});
  Tensor y({idx.size()});
  for (std::size_t j = 0; j < idx.size(); ++j) {
    for (std::size_t d = 0; d < ds.dim(); ++d) x.at(j, d) = ds.inputs.at(idx[j], d);
    y[j] = ds.labels[idx[j]];
  }
  return {std::move(x), std::move(y)};
}

// One rank of synchronous data-parallel SGD.
class Worker {
 public:
  Worker(TrainingConfig cfg, Transport& t, const Dataset& ds)
      : cfg_(std::move(cfg)), transport_(&t), group_(t), data_(&ds),
        model_(mlp_layers(cfg_.layer_dims()), cfg_.seed), lr_(cfg_.learning_rate()) {
    if (t.size() != cfg_.workers)
      throw ConfigError("transport has " + std::to_string(t.size()) + " ranks, config says " +
                        std::to_string(cfg_.workers));
  }

  IterationMetrics train_step() {
    IterationMetrics m;
    m.iter = iter_;
    m.rank = group_.rank();
    phase_ = "compute";
    const double t0 = transport_->clock();
    auto [x, y] = shard_batch(*data_, iter_, group_.rank(), cfg_.workers, cfg_.per_device_batch);
    auto fwd = forward(model_, x, y);
    GradientSet grads = backward(model_, fwd.cache);
    if (transport_->is_simulated())
      transport_->elapse(cfg_.per_device_batch * cfg_.sim_seconds_per_sample);
    const double t1 = transport_->clock();
    local_grads_ = grads;

    phase_ = "allreduce";
    if (cfg_.aggregation == Aggregation::ring_chunkwise) {
      grads = allreduce_chunkwise(std::move(grads), group_, Algorithm::ring);
    } else {
      FlatBuffer buf = pack(grads);
      allreduce(buf.data, group_,
                cfg_.aggregation == Aggregation::ring_packed ? Algorithm::ring : Algorithm::tree);
      unpack_into(buf, grads);
    }
    const double t2 = transport_->clock();

    phase_ = "update";
    const float k = static_cast<float>(cfg_.workers);
    for (auto& c : grads.chunks)
      for (auto& v : c.values()) v /= k;
    aggregated_ = grads;
    sgd_update(model_, grads, static_cast<float>(lr_), static_cast<float>(cfg_.weight_decay));

    m.t_comp = t1 - t0;
    m.t_comm = t2 - t1;
    m.loss = static_cast<double>(fwd.loss);
    ++iter_;
    return m;
  }

  const RealModel& model() const noexcept { return model_; }
  const GradientSet& local_gradients() const noexcept { return local_grads_; }
  const GradientSet& aggregated_gradients() const noexcept { return aggregated_; }
  int iteration() const noexcept { return iter_; }
  const char* phase() const noexcept { return phase_; }
  double learning_rate() const noexcept { return lr_; }

 private:
  TrainingConfig cfg_;
  Transport* transport_;
  CommGroup group_;
  const Dataset* data_;
  RealModel model_;
  double lr_;
  int iter_ = 0;
  const char* phase_ = "setup";
  GradientSet local_grads_;
  GradientSet aggregated_;
};

struct RankResult {
  std::vector<IterationMetrics> metrics;
  std::vector<Tensor> weights;
};

// FNV-1a over the weight bits; equal across ranks after every step.
inline std::uint64_t weights_checksum(const std::vector<Tensor>& ws) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& w : ws)
    for (float v : w.values()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      for (int i = 0; i < 4; ++i) {
        h ^= (bits >> (8 * i)) & 0xFF;
        h *= 0x100000001b3ull;
      }
    }
  return h;
}

using StepHook = std::function<void(const Worker&, const IterationMetrics&)>;

// Runs config.iterations steps on this rank. A failure is rethrown with the
// rank, iteration and phase in the message.
inline RankResult run_training(const TrainingConfig& cfg, Transport& t, const Dataset& ds,
                               const StepHook& hook = {}) {
  cfg.validate();
  Worker w(cfg, t, ds);
  RankResult out;
  out.metrics.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int i = 0; i < cfg.iterations; ++i) {
    try {
      out.metrics.push_back(w.train_step());
    } catch (const CommError& e) {
      throw CommError("rank " + std::to_string(t.rank()) + " failed in " + w.phase() +
                          " at iteration " + std::to_string(i) + ": " + e.what(),
                      e.rank() >= 0 ? e.rank() : t.rank());
    }
    if (hook) hook(w, out.metrics.back());
  }
  out.weights = w.model().weights();
  return out;
}

inline RankResult train_single(const TrainingConfig& cfg) {
  SoloTransport solo;
  const auto ds = make_dataset(cfg);
  return run_training(cfg.with_workers(1), solo, ds);
}

inline std::vector<RankResult> train_sim(const TrainingConfig& cfg, const NetProfile& net,
                                         const StepHook& hook = {}) {
  cfg.validate();
  const auto ds = make_dataset(cfg);
  std::vector<RankResult> res(static_cast<std::size_t>(cfg.workers));
  if (cfg.workers == 1) {
    SimNetwork n(1, net);
    auto t = n.endpoint(0);
    res[0] = run_training(cfg, *t, ds, hook);
    return res;
  }
  run_simulated(
      cfg.workers, net,
      [&](int r, Transport& t) { res[static_cast<std::size_t>(r)] = run_training(cfg, t, ds, hook); },
      cfg.recv_timeout_s);
  return res;
}

inline std::vector<RankResult> train_tcp_local(const TrainingConfig& cfg, const StepHook& hook = {}) {
  cfg.validate();
  const auto ds = make_dataset(cfg);
  std::vector<RankResult> res(static_cast<std::size_t>(cfg.workers));
  if (cfg.workers == 1) {
    res[0] = train_single(cfg);
    return res;
  }
  TcpOptions opts;
  opts.recv_timeout_s = cfg.recv_timeout_s;
  run_tcp_local(
      cfg.workers,
      [&](int r, Transport& t) { res[static_cast<std::size_t>(r)] = run_training(cfg, t, ds, hook); },
      opts);
  return res;
}

inline constexpr const char* kMetricsHeader = "iter,rank,t_comp_s,t_comm_s,loss";

inline void write_metrics_csv(std::ostream& os, const std::vector<IterationMetrics>& ms,
                              bool header = true) {
  if (header) os << kMetricsHeader << '\n';
  char line[160];
  for (const auto& m : ms) {
    std::snprintf(line, sizeof line, "%d,%d,%.9g,%.9g,%.9g\n", m.iter, m.rank, m.t_comp,
                  m.t_comm, m.loss);
    os << line;
  }
}

// Largest relative difference between two weight sets, scaled by the
// largest magnitude so near-zero entries do not dominate.
inline double max_relative_diff(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.size() != b.size()) throw ShapeError("weight sets differ in length");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].same_shape(b[i])) throw ShapeError("weight shapes differ");
    double scale = 0.0;
    for (float v : a[i].values()) scale = std::max(scale, std::fabs(static_cast<double>(v)));
    scale = std::max(scale, 1e-12);
    for (std::size_t j = 0; j < a[i].size(); ++j)
      worst = std::max(worst, std::fabs(static_cast<double>(a[i][j]) - b[i][j]) / scale);
  }
  return worst;
}

}  // namespace ringtrain
