#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ringtrain/errors.hpp"

namespace ringtrain {

// Bytes per "MB" in the model size table.
inline constexpr double kBytesPerMB = 1048576.0;

// Synthetic stand-in for a full-size network: total gradient size, how many
// per-layer chunks it is split into, and the largest per-device batch that
// fits device memory.
struct ModelProfile {
  std::string name;
  double size_mb = 0;
  int num_chunks = 0;
  int batch_per_device = 0;
  std::vector<std::size_t> chunk_elems;

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (auto c : chunk_elems) n += c;
    return n;
  }
  double total_bytes() const { return 4.0 * static_cast<double>(total_elements()); }
};

struct ProfileRow {
  std::string_view name;
  double size_mb;
  int num_chunks;
  int batch_per_device;
};

inline constexpr std::array<ProfileRow, 10> kProfileTable{{
    {"AlexNet", 232.56, 16, 32},
    {"GoogleNet", 26.70, 116, 16},
    {"Inception-v3", 91.05, 556, 4},
    {"Mobilenet-v1", 16.23, 164, 8},
    {"Mobilenet-v2", 13.51, 320, 8},
    {"ResNet-50", 97.70, 321, 4},
    {"ResNet-101", 170.34, 626, 2},
    {"ResNet-152", 230.20, 932, 2},
    {"SequeezeNet-v1.0", 4.76, 52, 16},
    {"SequeezeNet-v1.1", 4.71, 52, 32},
}};

inline std::vector<std::string> profile_names() {
  std::vector<std::string> out;
  for (const auto& r : kProfileTable) out.emplace_back(r.name);
  return out;
}

inline std::string_view canonical_profile_name(std::string_view name) {
  if (name == "SqueezeNet-v1.0") return "SequeezeNet-v1.0";
  if (name == "SqueezeNet-v1.1") return "SequeezeNet-v1.1";
  return name;
}

// Total elements are round(size_mb * 2^20 / 4); they are spread as evenly
// as possible, the remainder going one element at a time to the first
// chunks.
inline std::vector<std::size_t> split_evenly(std::size_t total, int chunks) {
  std::vector<std::size_t> out(static_cast<std::size_t>(chunks),
                               total / static_cast<std::size_t>(chunks));
  const std::size_t rem = total % static_cast<std::size_t>(chunks);
  for (std::size_t i = 0; i < rem; ++i) ++out[i];
  return out;
}

inline ModelProfile make_profile(std::string name, double size_mb,
                                 int num_chunks, int batch_per_device) {
  if (num_chunks < 1) throw ConfigError("profile needs at least one chunk");
  ModelProfile p;
  p.name = std::move(name);
  p.size_mb = size_mb;
  p.num_chunks = num_chunks;
  p.batch_per_device = batch_per_device;
  const auto total =
      static_cast<std::size_t>(std::llround(size_mb * kBytesPerMB / 4.0));
  p.chunk_elems = split_evenly(total, num_chunks);
  return p;
}

inline ModelProfile build_profile(std::string_view name) {
  const auto key = canonical_profile_name(name);
  for (const auto& r : kProfileTable)
    if (r.name == key)
      return make_profile(std::string(r.name), r.size_mb, r.num_chunks,
                          r.batch_per_device);
  throw NotFoundError("unknown model profile '" + std::string(name) + "'");
}

inline std::vector<ModelProfile> all_profiles() {
  std::vector<ModelProfile> out;
  for (const auto& r : kProfileTable) out.push_back(build_profile(r.name));
  return out;
}

}  // namespace ringtrain
