#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ringtrain/errors.hpp"
#include "ringtrain/flat_buffer.hpp"
#include "ringtrain/model.hpp"
#include "ringtrain/transport.hpp"

namespace ringtrain {

enum class Algorithm { ring, tree };

inline const char* to_string(Algorithm a) {
  return a == Algorithm::ring ? "ring" : "tree";
}

// Pipelining unit of the tree baseline.
inline constexpr std::size_t kDefaultTreeSegmentBytes = 5u << 20;

struct Segment {
  std::size_t offset = 0;
  std::size_t length = 0;
};

// Ring partition: segment s has ceil(n/K) elements for s < n mod K and
// floor(n/K) otherwise. Zero-length segments are legal when n < K.
inline Segment ring_segment(std::size_t n, int k, int s) {
  const auto K = static_cast<std::size_t>(k);
  const auto S = static_cast<std::size_t>(s);
  const std::size_t base = n / K, rem = n % K;
  const std::size_t len = base + (S < rem ? 1 : 0);
  const std::size_t off = S * base + std::min(S, rem);
  return {off, len};
}

inline std::size_t tree_segment_count(std::size_t n, std::size_t seg_elems) {
  if (seg_elems == 0) throw ConfigError("tree segment size must be positive");
  return n == 0 ? 1 : (n + seg_elems - 1) / seg_elems;
}

inline Segment tree_segment(std::size_t n, std::size_t seg_elems, std::size_t s) {
  const std::size_t off = s * seg_elems;
  return {off, off >= n ? 0 : std::min(seg_elems, n - off)};
}

// Binomial tree rooted at rank 0.
inline int lowbit(int v) { return v & -v; }
inline int tree_parent(int v) { return v - lowbit(v); }
inline std::vector<int> tree_children(int v, int k) {
  std::vector<int> out;
  for (int j = 1; v + j < k && (v == 0 || j < lowbit(v)); j <<= 1)
    out.push_back(v + j);
  return out;
}

namespace detail {

inline void add_into(std::span<float> dst, std::span<const float> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

// Bandwidth-optimal ring: K-1 scatter-reduce steps then K-1 allgather steps.
// Rank r always sends to r+1 and receives from r-1. Result is the
// elementwise SUM, identical on every rank.
inline void ring_allreduce(std::span<float> data, CommGroup& g) {
  const int k = g.size(), r = g.rank();
  const auto inv = g.begin_invocation();
  if (k == 1) return;
  const std::size_t n = data.size();
  std::vector<float> tmp(ring_segment(n, k, 0).length);
  auto seg = [&](int s) {
    const auto sg = ring_segment(n, k, ((s % k) + k) % k);
    return data.subspan(sg.offset, sg.length);
  };
  for (int i = 0; i < k - 1; ++i) {
    const auto tag = CommGroup::tag(inv, static_cast<std::uint32_t>(i));
    g.send_floats(g.next(), tag, seg(r - i));
    auto dst = seg(r - i - 1);
    std::span<float> in(tmp.data(), dst.size());
    g.recv_floats(g.prev(), tag, in);
    detail::add_into(dst, in);
  }
  for (int i = 0; i < k - 1; ++i) {
    const auto tag = CommGroup::tag(inv, static_cast<std::uint32_t>(k - 1 + i));
    g.send_floats(g.next(), tag, seg(r + 1 - i));
    g.recv_floats(g.prev(), tag, seg(r - i));
  }
  g.transport().flush();
}

// Library-allreduce stand-in: binomial-tree reduce to rank 0, then
// binomial-tree broadcast, both pipelined in fixed-size segments.
inline void tree_allreduce(std::span<float> data, CommGroup& g,
                           std::size_t segment_bytes = kDefaultTreeSegmentBytes) {
  const int k = g.size(), v = g.rank();
  const auto inv = g.begin_invocation();
  if (k == 1) return;
  const std::size_t n = data.size();
  const std::size_t seg_elems = std::max<std::size_t>(1, segment_bytes / 4);
  const std::size_t S = tree_segment_count(n, seg_elems);
  const auto children = tree_children(v, k);
  std::vector<float> tmp(std::min(seg_elems, n));

  for (std::size_t s = 0; s < S; ++s) {
    const auto sg = tree_segment(n, seg_elems, s);
    auto part = data.subspan(sg.offset, sg.length);
    const auto tag = CommGroup::tag(inv, static_cast<std::uint32_t>(s));
    for (int c : children) {
      std::span<float> in(tmp.data(), part.size());
      g.recv_floats(c, tag, in);
      detail::add_into(part, in);
    }
    if (v != 0) g.send_floats(tree_parent(v), tag, part);
  }
  for (std::size_t s = 0; s < S; ++s) {
    const auto sg = tree_segment(n, seg_elems, s);
    auto part = data.subspan(sg.offset, sg.length);
    const auto tag = CommGroup::tag(inv, static_cast<std::uint32_t>(S + s));
    if (v != 0) g.recv_floats(tree_parent(v), tag, part);
    for (int c : children) g.send_floats(c, tag, part);
  }
  g.transport().flush();
}

inline void allreduce(std::span<float> data, CommGroup& g, Algorithm alg,
                      std::size_t tree_segment_bytes = kDefaultTreeSegmentBytes) {
  if (alg == Algorithm::ring)
    ring_allreduce(data, g);
  else
    tree_allreduce(data, g, tree_segment_bytes);
}

inline FlatBuffer ring_allreduce(FlatBuffer buf, CommGroup& g) {
  ring_allreduce(std::span<float>(buf.data), g);
  return buf;
}

inline FlatBuffer tree_allreduce(FlatBuffer buf, CommGroup& g) {
  tree_allreduce(std::span<float>(buf.data), g);
  return buf;
}

// One collective invocation per chunk, in chunk order.
inline GradientSet allreduce_chunkwise(GradientSet grads, CommGroup& g,
                                       Algorithm alg,
                                       std::size_t tree_segment_bytes =
                                           kDefaultTreeSegmentBytes) {
  for (auto& c : grads.chunks) allreduce(c.values(), g, alg, tree_segment_bytes);
  return grads;
}

}  // namespace ringtrain
