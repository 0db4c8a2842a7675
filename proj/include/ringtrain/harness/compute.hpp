#pragma once

#include <cstddef>
#include <string>

#include "json.hpp"
#include "ringtrain/collectives.hpp"
#include "ringtrain/errors.hpp"
#include "ringtrain/net_profile.hpp"
#include "ringtrain/profile.hpp"

namespace ringtrain {

enum class WorkProxy { uniform, gradient_elements };

inline const char* to_string(WorkProxy w) {
  return w == WorkProxy::uniform ? "uniform" : "gradient_elements";
}

inline WorkProxy parse_work_proxy(const std::string& s) {
  if (s == "uniform") return WorkProxy::uniform;
  if (s == "gradient_elements") return WorkProxy::gradient_elements;
  throw ConfigError("unknown work_per_sample proxy '" + s + "'");
}

// Per-node compute and host-side costs used by the simulator.
//   t_comp = b * work_per_sample(model) / throughput
// With the uniform proxy every sample is one unit of work, so throughput is
// samples per second.
struct ComputeProfile {
  double throughput = 10.0;
  WorkProxy work_proxy = WorkProxy::uniform;
  double pack_rate_mb_per_s = 200.0;   // 10^6 bytes/s, pack and unpack each
  double invocation_overhead_s = 0.0;  // per collective call, chunk-wise only
  std::size_t tree_segment_bytes = kDefaultTreeSegmentBytes;

  void validate() const {
    if (!(throughput > 0)) throw ConfigError("throughput must be > 0");
    if (!(pack_rate_mb_per_s > 0)) throw ConfigError("pack_rate_mb_per_s must be > 0");
    if (!(invocation_overhead_s >= 0)) throw ConfigError("invocation_overhead_s must be >= 0");
    if (tree_segment_bytes < 4) throw ConfigError("tree_segment_bytes must be >= 4");
  }

  double work_per_sample(const ModelProfile& m) const {
    return work_proxy == WorkProxy::uniform ? 1.0 : static_cast<double>(m.total_elements());
  }

  double compute_time(const ModelProfile& m, int b) const {
    return b * work_per_sample(m) / throughput;
  }

  // Copy into the flat buffer and back out again.
  double pack_time(double bytes) const { return 2.0 * bytes / (pack_rate_mb_per_s * 1e6); }

  friend bool operator==(const ComputeProfile&, const ComputeProfile&) = default;
};

inline void to_json(nlohmann::json& j, const ComputeProfile& c) {
  j = nlohmann::json{{"throughput", c.throughput},
                     {"work_per_sample", to_string(c.work_proxy)},
                     {"pack_rate_mb_per_s", c.pack_rate_mb_per_s},
                     {"invocation_overhead_s", c.invocation_overhead_s},
                     {"tree_segment_bytes", c.tree_segment_bytes}};
}

inline void from_json(const nlohmann::json& j, ComputeProfile& c) {
  try {
    c.throughput = j.at("throughput").get<double>();
    c.work_proxy = parse_work_proxy(j.at("work_per_sample").get<std::string>());
    c.pack_rate_mb_per_s = j.at("pack_rate_mb_per_s").get<double>();
    c.invocation_overhead_s = j.at("invocation_overhead_s").get<double>();
    c.tree_segment_bytes = j.at("tree_segment_bytes").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad compute profile: ") + e.what());
  }
  c.validate();
}

inline ComputeProfile load_compute_profile(const std::string& path) {
  return read_json_file(path).get<ComputeProfile>();
}

}  // namespace ringtrain
