#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "ringtrain/errors.hpp"
#include "ringtrain/net_profile.hpp"

namespace ringtrain {

struct ThermalTier {
  double threshold_c = 0.0;
  double multiplier = 1.0;
  friend bool operator==(const ThermalTier&, const ThermalTier&) = default;
};

// Newton cooling toward ambient plus a constant heating rate while the CPU
// computes:  dT/dt = heat_rate * computing - cool_rate * (T - ambient).
// cool_rate is in 1/s; infinity pins T at ambient.
struct ThermalModel {
  double ambient_c = 30.0;
  double heat_rate = 0.5;
  double cool_rate = 0.01;
  double fan_cool_factor = 1.6;   // cool_rate multiplier with the fan on
  double baseline_t_comp_s = 18.2;
  double idle_s_per_iter = 2.0;   // communication phase, CPU idle
  std::vector<ThermalTier> tiers;

  void validate() const {
    if (!(heat_rate >= 0)) throw ConfigError("heat_rate must be >= 0");
    if (!(cool_rate >= 0)) throw ConfigError("cool_rate must be >= 0");
    if (!(fan_cool_factor >= 1)) throw ConfigError("fan_cool_factor must be >= 1");
    if (!(baseline_t_comp_s > 0)) throw ConfigError("baseline_t_comp_s must be > 0");
    if (!(idle_s_per_iter >= 0)) throw ConfigError("idle_s_per_iter must be >= 0");
    for (std::size_t i = 0; i < tiers.size(); ++i) {
      if (!(tiers[i].multiplier >= 1)) throw ConfigError("tier multipliers must be >= 1");
      if (i > 0 && !(tiers[i].threshold_c > tiers[i - 1].threshold_c))
        throw ConfigError("tier thresholds must be strictly increasing");
      if (i > 0 && tiers[i].multiplier < tiers[i - 1].multiplier)
        throw ConfigError("tier multipliers must be non-decreasing");
    }
  }

  // Step function: multiplier of the highest tier whose threshold is reached.
  double multiplier(double temp_c) const {
    double m = 1.0;
    for (const auto& t : tiers)
      if (temp_c >= t.threshold_c) m = t.multiplier;
    return m;
  }

  ThermalModel with_fan(bool on) const {
    ThermalModel t = *this;
    if (on) t.cool_rate *= fan_cool_factor;
    return t;
  }

  friend bool operator==(const ThermalModel&, const ThermalModel&) = default;
};

class ThermalState {
 public:
  explicit ThermalState(const ThermalModel& m) : model_(&m), temp_(m.ambient_c) {}

  double temp() const noexcept { return temp_; }
  double multiplier() const { return model_->multiplier(temp_); }

  // Exact solution of the cooling ODE over one phase.
  void advance(double seconds, bool computing) {
    if (seconds <= 0) return;
    const auto& m = *model_;
    const double heat = computing ? m.heat_rate : 0.0;
    if (std::isinf(m.cool_rate)) {
      temp_ = m.ambient_c;
    } else if (m.cool_rate == 0.0) {
      temp_ += heat * seconds;
    } else {
      const double eq = m.ambient_c + heat / m.cool_rate;
      temp_ = eq + (temp_ - eq) * std::exp(-m.cool_rate * seconds);
    }
    if (temp_ < m.ambient_c) temp_ = m.ambient_c;
  }

 private:
  const ThermalModel* model_;
  double temp_;
};

inline void to_json(nlohmann::json& j, const ThermalModel& m) {
  nlohmann::json tiers = nlohmann::json::array();
  for (const auto& t : m.tiers) tiers.push_back({{"threshold_c", t.threshold_c}, {"multiplier", t.multiplier}});
  // JSON has no infinity; null stands for it
  nlohmann::json cool = std::isinf(m.cool_rate) ? nlohmann::json(nullptr) : nlohmann::json(m.cool_rate);
  j = nlohmann::json{{"ambient_c", m.ambient_c},
                     {"heat_rate", m.heat_rate},
                     {"cool_rate", cool},
                     {"fan_cool_factor", m.fan_cool_factor},
                     {"baseline_t_comp_s", m.baseline_t_comp_s},
                     {"idle_s_per_iter", m.idle_s_per_iter},
                     {"tiers", tiers}};
}

inline void from_json(const nlohmann::json& j, ThermalModel& m) {
  try {
    m.ambient_c = j.at("ambient_c").get<double>();
    m.heat_rate = j.at("heat_rate").get<double>();
    m.cool_rate = j.at("cool_rate").is_null() ? std::numeric_limits<double>::infinity()
                                              : j.at("cool_rate").get<double>();
    m.fan_cool_factor = j.at("fan_cool_factor").get<double>();
    m.baseline_t_comp_s = j.at("baseline_t_comp_s").get<double>();
    m.idle_s_per_iter = j.at("idle_s_per_iter").get<double>();
    m.tiers.clear();
    for (const auto& t : j.at("tiers"))
      m.tiers.push_back({t.at("threshold_c").get<double>(), t.at("multiplier").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad thermal profile: ") + e.what());
  }
  m.validate();
}

inline ThermalModel load_thermal_model(const std::string& path) {
  return read_json_file(path).get<ThermalModel>();
}

}  // namespace ringtrain
