#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>

#include "json.hpp"
#include "ringtrain/errors.hpp"

namespace ringtrain {

// Shared-medium link model. Effective bandwidth degrades with the number of
// active nodes: bw / (1 + contention_coeff * max(0, k - 2)).
struct NetProfile {
  double base_bandwidth_mbps = 940.0;
  double latency_ms = 0.0;
  double jitter_frac = 0.0;
  double contention_coeff = 0.0;
  double disconnect_prob = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(base_bandwidth_mbps > 0)) throw ConfigError("base_bandwidth must be > 0");
    if (!(latency_ms >= 0)) throw ConfigError("latency must be >= 0");
    if (!(jitter_frac >= 0)) throw ConfigError("jitter_frac must be >= 0");
    if (!(contention_coeff >= 0)) throw ConfigError("contention_coeff must be >= 0");
    if (!(disconnect_prob >= 0 && disconnect_prob < 1))
      throw ConfigError("disconnect_prob must be in [0, 1)");
  }

  double effective_bandwidth_mbps(int k_active) const {
    return base_bandwidth_mbps /
           (1.0 + contention_coeff * std::max(0, k_active - 2));
  }
  friend bool operator==(const NetProfile&, const NetProfile&) = default;
};

inline void to_json(nlohmann::json& j, const NetProfile& p) {
  j = nlohmann::json{{"base_bandwidth", p.base_bandwidth_mbps},
                     {"latency", p.latency_ms},
                     {"jitter_frac", p.jitter_frac},
                     {"contention_coeff", p.contention_coeff},
                     {"disconnect_prob", p.disconnect_prob},
                     {"seed", p.seed}};
}

inline void from_json(const nlohmann::json& j, NetProfile& p) {
  try {
    p.base_bandwidth_mbps = j.at("base_bandwidth").get<double>();
    p.latency_ms = j.at("latency").get<double>();
    p.jitter_frac = j.at("jitter_frac").get<double>();
    p.contention_coeff = j.at("contention_coeff").get<double>();
    p.disconnect_prob = j.at("disconnect_prob").get<double>();
    p.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad network profile: ") + e.what());
  }
  p.validate();
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline NetProfile load_net_profile(const std::string& path) {
  return read_json_file(path).get<NetProfile>();
}

// Transfer time for `bytes` with a given jitter multiplier on the bandwidth
// term; latency is never scaled.
inline double sim_transfer_time(double bytes, int k_active, const NetProfile& p,
                                double jitter = 1.0) {
  const double bw = p.effective_bandwidth_mbps(k_active);
  return p.latency_ms * 1e-3 + jitter * bytes * 8.0 / (1e6 * bw);
}

// Acklam's rational approximation of the standard normal quantile,
// relative error below 1.2e-9 on (0, 1).
inline double inverse_normal_cdf(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00, 2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double lo = 0.02425, hi = 1 - lo;
  if (p <= 0) return -INFINITY;
  if (p >= 1) return INFINITY;
  if (p < lo) {
    const double q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p > hi) {
    const double q = std::sqrt(-2 * std::log1p(-p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  const double q = p - 0.5, r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

// Seeded source of jitter multipliers and disconnect draws. Lognormal with
// mean 1 and standard deviation jitter_frac; Box-Muller over raw
// mt19937_64 output so sequences do not depend on the standard library.
class LinkSampler {
 public:
  LinkSampler(const NetProfile& p, std::uint64_t stream = 0)
      : profile_(p), rng_(mix(p.seed, stream)) {
    const double v = std::log1p(p.jitter_frac * p.jitter_frac);
    sigma_ = std::sqrt(v);
    mu_ = -0.5 * v;
  }

  const NetProfile& profile() const noexcept { return profile_; }

  double jitter() {
    if (sigma_ == 0.0) return 1.0;
    return std::exp(mu_ + sigma_ * normal());
  }

  // Largest of `count` independent jitter draws, sampled in one step:
  // the max of n uniforms is U^(1/n).
  double max_jitter(std::size_t count) {
    if (sigma_ == 0.0 || count == 0) return 1.0;
    const double u = (static_cast<double>(rng_() >> 11) + 0.5) * 0x1.0p-53;
    const double p = std::exp(std::log(u) / static_cast<double>(count));
    return std::exp(mu_ + sigma_ * inverse_normal_cdf(p));
  }

  double transfer_time(double bytes, int k_active) {
    return sim_transfer_time(bytes, k_active, profile_, jitter());
  }

  bool disconnect() {
    if (profile_.disconnect_prob <= 0.0) return false;
    return uniform() < profile_.disconnect_prob;
  }

  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

 private:
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  NetProfile profile_;
  std::mt19937_64 rng_;
  double mu_ = 0, sigma_ = 0;
  double spare_ = 0;
  bool have_spare_ = false;
};

}  // namespace ringtrain
