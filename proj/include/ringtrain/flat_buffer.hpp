#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "ringtrain/errors.hpp"
#include "ringtrain/model.hpp"
#include "ringtrain/tensor.hpp"

namespace ringtrain {

struct ChunkSpan {
  std::size_t chunk_index = 0;
  std::size_t offset = 0;
  std::size_t length = 0;
  std::vector<std::size_t> shape;
  friend bool operator==(const ChunkSpan&, const ChunkSpan&) = default;
};

// All gradient chunks copied back to back into one contiguous array, so a
// single collective call moves the whole model.
struct FlatBuffer {
  std::vector<float> data;
  std::vector<ChunkSpan> layout;

  std::size_t size() const noexcept { return data.size(); }
  friend bool operator==(const FlatBuffer&, const FlatBuffer&) = default;
};

inline FlatBuffer pack(const GradientSet& grads) {
  FlatBuffer buf;
  buf.data.reserve(grads.total_elements());
  buf.layout.reserve(grads.chunks.size());
  for (std::size_t i = 0; i < grads.chunks.size(); ++i) {
    const auto& c = grads.chunks[i];
    buf.layout.push_back({i, buf.data.size(), c.size(), c.shape()});
    buf.data.insert(buf.data.end(), c.values().begin(), c.values().end());
  }
  return buf;
}

// Spans must be in chunk order and tile [0, size) with no gaps.
inline void validate_layout(const FlatBuffer& buf) {
  std::size_t expect = 0;
  for (std::size_t i = 0; i < buf.layout.size(); ++i) {
    const auto& s = buf.layout[i];
    if (s.chunk_index != i)
      throw LayoutError("layout entry " + std::to_string(i) +
                        " has chunk index " + std::to_string(s.chunk_index));
    if (s.offset != expect)
      throw LayoutError("chunk " + std::to_string(i) + " starts at " +
                        std::to_string(s.offset) + ", expected " +
                        std::to_string(expect));
    if (shape_size(s.shape) != s.length)
      throw LayoutError("chunk " + std::to_string(i) + " shape " +
                        shape_string(s.shape) + " does not hold " +
                        std::to_string(s.length) + " elements");
    expect += s.length;
  }
  if (expect != buf.data.size())
    throw LayoutError("layout covers " + std::to_string(expect) +
                      " elements, buffer holds " +
                      std::to_string(buf.data.size()));
}

inline GradientSet unpack(const FlatBuffer& buf) {
  validate_layout(buf);
  GradientSet g;
  g.chunks.reserve(buf.layout.size());
  for (const auto& s : buf.layout) {
    std::vector<float> v(buf.data.begin() + static_cast<std::ptrdiff_t>(s.offset),
                         buf.data.begin() +
                             static_cast<std::ptrdiff_t>(s.offset + s.length));
    g.chunks.emplace_back(s.shape, std::move(v));
  }
  return g;
}

// Unpack into an existing gradient set of matching structure, no allocation.
inline void unpack_into(const FlatBuffer& buf, GradientSet& out) {
  validate_layout(buf);
  if (out.chunks.size() != buf.layout.size())
    throw LayoutError("destination has " + std::to_string(out.chunks.size()) +
                      " chunks, layout has " + std::to_string(buf.layout.size()));
  for (const auto& s : buf.layout) {
    auto& c = out.chunks[s.chunk_index];
    if (c.size() != s.length) throw LayoutError("chunk size mismatch");
    std::copy_n(buf.data.begin() + static_cast<std::ptrdiff_t>(s.offset),
                s.length, c.data());
  }
}

// Gradient set with the shape of a synthetic profile: one flat chunk per
// entry in chunk_elems.
inline GradientSet gradients_for_sizes(const std::vector<std::size_t>& sizes,
                                       float fill = 0.0f) {
  GradientSet g;
  g.chunks.reserve(sizes.size());
  for (auto n : sizes) g.chunks.emplace_back(std::vector<std::size_t>{n}, fill);
  return g;
}

}  // namespace ringtrain
