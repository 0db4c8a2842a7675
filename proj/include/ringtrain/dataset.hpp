#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ringtrain/errors.hpp"
#include "ringtrain/tensor.hpp"

namespace ringtrain {

// Labelled samples; labels are class indices stored as floats.
struct Dataset {
  Tensor inputs;  // {size, dim}
  Tensor labels;  // {size}
  std::size_t classes = 0;

  std::size_t size() const { return inputs.rank() ? inputs.dim(0) : 0; }
  std::size_t dim() const { return inputs.rank() ? inputs.dim(1) : 0; }
};

// Seeded isotropic Gaussian blobs, one per class, centres drawn from
// N(0, separation^2). Sample i belongs to class i mod classes, so any window
// of consecutive indices is close to balanced.
inline Dataset make_blobs(std::size_t size, std::size_t dim, std::size_t classes,
                          std::uint64_t seed, double spread = 1.0, double separation = 4.0) {
  if (size == 0 || dim == 0 || classes < 2)
    throw ConfigError("dataset needs size > 0, dim > 0 and at least two classes");
  std::mt19937_64 rng(seed ^ 0xB10B5ull);
  auto normal = [&rng] {
    double u1 = 0;
    while (u1 <= 0) u1 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  };
  std::vector<double> centres(classes * dim);
  for (auto& c : centres) c = separation * normal();
  Dataset d{Tensor({size, dim}), Tensor({size}), classes};
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t c = i % classes;
    d.labels[i] = static_cast<float>(c);
    for (std::size_t j = 0; j < dim; ++j)
      d.inputs.at(i, j) = static_cast<float>(centres[c * dim + j] + spread * normal());
  }
  return d;
}

}  // namespace ringtrain
