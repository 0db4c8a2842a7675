#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ringtrain/errors.hpp"

namespace ringtrain {

inline std::size_t shape_size(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense row-major array. Float for weights and payloads, double for the
// gradient-check shadow path.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(std::vector<std::size_t> shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  BasicTensor(std::vector<std::size_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size())
      throw ShapeError("tensor shape " + shape_string(shape_) +
                       " does not match " + std::to_string(data_.size()) +
                       " elements");
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const noexcept { return shape_.size(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // 2-D access, row-major.
  T& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }

  bool all_finite() const noexcept {
    for (T v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_shape(const BasicTensor& o) const noexcept {
    return shape_ == o.shape_;
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

template <typename To, typename From>
BasicTensor<To> tensor_cast(const BasicTensor<From>& t) {
  std::vector<To> out(t.values().begin(), t.values().end());
  return BasicTensor<To>(t.shape(), std::move(out));
}

}  // namespace ringtrain
