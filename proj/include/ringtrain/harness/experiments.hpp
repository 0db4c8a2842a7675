#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ringtrain/collectives.hpp"
#include "ringtrain/engine.hpp"
#include "ringtrain/harness/compute.hpp"
#include "ringtrain/harness/report.hpp"
#include "ringtrain/harness/thermal.hpp"
#include "ringtrain/net_profile.hpp"
#include "ringtrain/profile.hpp"
#include "ringtrain/schedule.hpp"

namespace ringtrain {

inline constexpr std::size_t kAnchorBytes = 39321600;  // 37.5 MB

// RNG stream for one (workload, K, algorithm) cell. Every cell draws its own
// jitter sequence, so a row's value does not depend on which other rows ran
// before it.
inline std::uint64_t cell_stream(const std::string& workload, int k, const std::string& alg) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    h ^= 0xFF;
    h *= 0x100000001b3ull;
  };
  mix(workload);
  mix(std::to_string(k));
  mix(alg);
  return h;
}

// Aggregation time of one iteration. K = 1 has no peers and costs nothing.
inline double simulate_comm(const ModelProfile& m, int k, const ComputeProfile& cp,
                            Aggregation alg, LinkSampler& link) {
  if (k <= 1) return 0.0;
  const std::size_t n = m.total_elements();
  switch (alg) {
    case Aggregation::ring_packed:
      return cp.pack_time(m.total_bytes()) + collective_time(Algorithm::ring, n, k, link);
    case Aggregation::tree_packed:
      return cp.pack_time(m.total_bytes()) +
             collective_time(Algorithm::tree, n, k, link, cp.tree_segment_bytes);
    case Aggregation::ring_chunkwise: {
      double t = 0.0;
      for (auto c : m.chunk_elems)
        t += cp.invocation_overhead_s + collective_time(Algorithm::ring, c, k, link);
      return t;
    }
  }
  return 0.0;
}

inline double simulate_comm(const ModelProfile& m, int k, const NetProfile& net,
                            const ComputeProfile& cp, Aggregation alg) {
  LinkSampler link(net, cell_stream(m.name, k, to_string(alg)));
  return simulate_comm(m, k, cp, alg, link);
}

// One simulated iteration: compute scaled by the current throttle level,
// then aggregation; the thermal state (if any) is advanced through both.
inline IterationMetrics simulate_iteration(const ModelProfile& m, int b, const ComputeProfile& cp,
                                           ThermalState* thermal, int k, const NetProfile& net,
                                           Aggregation alg) {
  if (b < 1 || k < 1) throw ConfigError("b and K must be >= 1");
  IterationMetrics it;
  it.rank = 0;
  const double mult = thermal ? thermal->multiplier() : 1.0;
  it.t_comp = cp.compute_time(m, b) * mult;
  it.t_comm = simulate_comm(m, k, net, cp, alg);
  if (thermal) {
    thermal->advance(it.t_comp, true);
    thermal->advance(it.t_comm, false);
  }
  return it;
}

namespace detail {

inline nlohmann::json base_meta(const NetProfile* net, const ComputeProfile* cp) {
  nlohmann::json j = nlohmann::json::object();
  if (net) {
    j["net"] = *net;
    j["seed"] = net->seed;
  }
  if (cp) j["compute"] = *cp;
  return j;
}

}  // namespace detail

// Fixed global batch, growing K. t_comp must halve per doubling and t_comm
// must not shrink.
inline ExperimentReport run_scaling_experiment(const ModelProfile& m, int B_fixed,
                                               std::vector<int> ks, const NetProfile& net,
                                               const ComputeProfile& cp,
                                               Aggregation alg = Aggregation::tree_packed) {
  if (ks.empty()) throw ConfigError("K list is empty");
  for (int k : ks)
    if (k < 1 || B_fixed % k != 0)
      throw ConfigError("global batch " + std::to_string(B_fixed) + " is not divisible by K=" +
                        std::to_string(k));
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

  ExperimentReport r;
  r.experiment = "scaling";
  r.meta = detail::base_meta(&net, &cp);
  r.meta["global_batch"] = B_fixed;
  for (int k : ks) {
    const auto it = simulate_iteration(m, B_fixed / k, cp, nullptr, k, net, alg);
    r.rows.push_back({"scaling", "sim", m.name, k, to_string(alg), it.t_comp, it.t_comm});
  }
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    const auto& a = r.rows[i - 1];
    const auto& b = r.rows[i];
    if (b.K == 2 * a.K) {
      const double want = a.t_comp / 2;
      r.check(std::fabs(b.t_comp - want) <= 0.05 * want,
              "t_comp does not halve from K=" + std::to_string(a.K) + " to K=" + std::to_string(b.K));
    }
    r.check(b.t_comm >= a.t_comm, "t_comm decreases from K=" + std::to_string(a.K) + " to K=" +
                                      std::to_string(b.K));
  }
  nlohmann::json totals = nlohmann::json::object();
  for (const auto& row : r.rows) totals[std::to_string(row.K)] = row.t_total();
  r.derived["t_total_by_K"] = totals;
  const auto has = [&](int k) { return std::find(ks.begin(), ks.end(), k) != ks.end(); };
  if (has(16) && has(32))
    r.derived["total_32_exceeds_16"] =
        r.row(m.name, 32, to_string(alg)).t_total() > r.row(m.name, 16, to_string(alg)).t_total();
  return r;
}

struct NamedNet {
  std::string name;
  NetProfile net;
};

inline std::string payload_label(const std::string& net_name, std::size_t bytes) {
  return net_name + ":" + std::to_string(bytes) + "B";
}

// Pure collective time for a payload, no host-side packing.
inline double collective_bench_time(std::size_t bytes, int k, const NetProfile& net,
                                    Algorithm alg, std::size_t tree_segment_bytes) {
  if (k <= 1) return 0.0;
  LinkSampler link(net, cell_stream("bytes:" + std::to_string(bytes), k, to_string(alg)));
  return collective_time(alg, bytes / 4, k, link, tree_segment_bytes);
}

inline ExperimentReport run_collective_bench(const std::vector<std::size_t>& sizes_bytes,
                                             std::vector<int> ks, const std::vector<NamedNet>& nets,
                                             const std::vector<Algorithm>& algs,
                                             std::size_t tree_segment_bytes = kDefaultTreeSegmentBytes) {
  if (std::find(sizes_bytes.begin(), sizes_bytes.end(), kAnchorBytes) == sizes_bytes.end())
    throw ConfigError("collective sizes must include the 37.5 MB anchor (39321600 bytes)");
  if (ks.empty()) throw ConfigError("K list is empty");
  std::sort(ks.begin(), ks.end());
  ExperimentReport r;
  r.experiment = "collective";
  nlohmann::json nj = nlohmann::json::object();
  for (const auto& n : nets) nj[n.name] = n.net;
  r.meta["nets"] = nj;
  r.meta["tree_segment_bytes"] = tree_segment_bytes;
  nlohmann::json slow = nlohmann::json::object();
  for (const auto& n : nets)
    for (auto alg : algs)
      for (auto bytes : sizes_bytes) {
        double first = -1, last = -1;
        int kfirst = 0, klast = 0;
        for (int k : ks) {
          const double t = collective_bench_time(bytes, k, n.net, alg, tree_segment_bytes);
          r.rows.push_back({"collective", "sim", payload_label(n.name, bytes), k, to_string(alg), 0.0, t});
          if (k >= 2 && first < 0) {
            first = t;
            kfirst = k;
          }
          if (k >= 2) {
            last = t;
            klast = k;
          }
        }
        if (first > 0 && klast > kfirst)
          slow[payload_label(n.name, bytes) + "/" + to_string(alg) + "/K" + std::to_string(kfirst) +
               "->" + std::to_string(klast)] = last / first;
      }
  r.derived["slowdown"] = slow;
  return r;
}

inline ExperimentReport run_aggregation_comparison(const std::vector<ModelProfile>& models, int k,
                                                   const NetProfile& net, const ComputeProfile& cp) {
  ExperimentReport r;
  r.experiment = "aggregation";
  r.meta = detail::base_meta(&net, &cp);
  nlohmann::json winners = nlohmann::json::object();
  for (const auto& m : models) {
    double packed = 0, chunk = 0;
    for (auto alg : {Aggregation::ring_packed, Aggregation::tree_packed, Aggregation::ring_chunkwise}) {
      const double t = simulate_comm(m, k, net, cp, alg);
      r.rows.push_back({"aggregation", "sim", m.name, k, to_string(alg), 0.0, t});
      if (alg == Aggregation::ring_packed) packed = t;
      if (alg == Aggregation::ring_chunkwise) chunk = t;
    }
    winners[m.name] = chunk < packed ? "ring_chunkwise" : "ring_packed";
  }
  r.derived["faster_ring_variant"] = winners;
  auto find = [&](const std::string& name) -> const ReportRow* {
    for (const auto& row : r.rows)
      if (row.model == name && row.alg == "ring_chunkwise") return &row;
    return nullptr;
  };
  if (const auto *a = find("Inception-v3"), *b = find("ResNet-50"); a && b && b->t_comm > 0)
    r.derived["chunkwise_ratio_inception_v3_to_resnet_50"] = a->t_comm / b->t_comm;
  return r;
}

// Each model runs at its own memory-maximal per-device batch.
inline ExperimentReport run_efficiency_sweep(int k, const NetProfile& net, const ComputeProfile& cp,
                                             Aggregation alg = Aggregation::ring_packed,
                                             const std::vector<ModelProfile>& models = all_profiles()) {
  ExperimentReport r;
  r.experiment = "efficiency";
  r.meta = detail::base_meta(&net, &cp);
  for (const auto& m : models) {
    const auto it = simulate_iteration(m, m.batch_per_device, cp, nullptr, k, net, alg);
    r.rows.push_back({"efficiency", "sim", m.name, k, to_string(alg), it.t_comp, it.t_comm});
    r.check(r.rows.back().eff() > 0 && r.rows.back().eff() <= 1,
            "efficiency of " + m.name + " outside (0, 1]");
  }
  if (!r.rows.empty()) {
    auto by_eff = [](const ReportRow& a, const ReportRow& b) { return a.eff() < b.eff(); };
    const auto mx = std::max_element(r.rows.begin(), r.rows.end(), by_eff);
    const auto mn = std::min_element(r.rows.begin(), r.rows.end(), by_eff);
    r.derived["max"] = {{"model", mx->model}, {"efficiency", mx->eff()}};
    r.derived["min"] = {{"model", mn->model}, {"efficiency", mn->eff()}};
  }
  return r;
}

// Bytes one rank puts on the wire: ring sends 2(K-1) segments of n/K; the
// tree root sends the whole buffer to each of its children.
inline double ring_bytes_per_node(std::size_t n, int k) {
  return k <= 1 ? 0.0 : 2.0 * 4.0 * static_cast<double>(n) * (k - 1) / k;
}
inline double tree_root_bytes(std::size_t n, int k) {
  return 4.0 * static_cast<double>(n) * static_cast<double>(tree_children(0, k).size());
}

inline ExperimentReport run_rar_vs_tree(const ModelProfile& m, std::vector<int> ks,
                                        const NetProfile& net, const ComputeProfile& cp) {
  std::sort(ks.begin(), ks.end());
  ExperimentReport r;
  r.experiment = "rar-vs-tree";
  r.meta = detail::base_meta(&net, &cp);
  nlohmann::json speedup = nlohmann::json::object();
  for (int k : ks) {
    const double tc = cp.compute_time(m, m.batch_per_device);
    const double ring = simulate_comm(m, k, net, cp, Aggregation::ring_packed);
    const double tree = simulate_comm(m, k, net, cp, Aggregation::tree_packed);
    r.rows.push_back({"rar-vs-tree", "sim", m.name, k, "ring_packed", tc, ring});
    r.rows.push_back({"rar-vs-tree", "sim", m.name, k, "tree_packed", tc, tree});
    speedup[std::to_string(k)] = ring > 0 ? tree / ring : 1.0;
  }
  r.derived["speedup_ring_over_tree"] = speedup;
  return r;
}

inline int count_upward_steps(const std::vector<ThermalSample>& s) {
  int steps = 0;
  for (std::size_t i = 1; i < s.size(); ++i)
    if (s[i].t_comp > s[i - 1].t_comp * (1 + 1e-12)) ++steps;
  return steps;
}

// Back-to-back iterations for duration_s: compute at the throttled speed
// sampled when the iteration starts, then an idle communication phase.
inline ExperimentReport run_thermal_scenario(const std::string& model, double duration_s,
                                             const ThermalModel& thermal, bool fan_on) {
  if (!(duration_s > 0)) throw ConfigError("duration must be > 0");
  thermal.validate();
  const ThermalModel tm = thermal.with_fan(fan_on);
  ThermalState state(tm);
  ExperimentReport r;
  r.experiment = "thermal";
  r.meta["thermal"] = thermal;
  r.meta["fan_on"] = fan_on;
  r.meta["duration_s"] = duration_s;
  const char* alg = fan_on ? "fan_on" : "fan_off";
  double t = 0.0;
  for (int i = 0; t < duration_s; ++i) {
    const double mult = state.multiplier();
    const double tc = tm.baseline_t_comp_s * mult;
    r.series.push_back({i, t, state.temp(), mult, tc});
    r.rows.push_back({"thermal", "sim", model, 1, alg, tc, tm.idle_s_per_iter});
    state.advance(tc, true);
    state.advance(tm.idle_s_per_iter, false);
    t += tc + tm.idle_s_per_iter;
  }
  nlohmann::json levels = nlohmann::json::array();
  for (std::size_t i = 0; i < r.series.size(); ++i)
    if (i == 0 || r.series[i].t_comp != r.series[i - 1].t_comp) levels.push_back(r.series[i].t_comp);
  r.derived["upward_steps"] = count_upward_steps(r.series);
  r.derived["t_comp_levels"] = levels;
  double peak = tm.ambient_c;
  for (const auto& s : r.series) {
    peak = std::max(peak, s.temp_c);
    r.check(s.temp_c >= tm.ambient_c, "temperature below ambient");
  }
  r.derived["peak_temp_c"] = peak;
  return r;
}

}  // namespace ringtrain
