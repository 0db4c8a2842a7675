#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "ringtrain/collectives.hpp"
#include "ringtrain/net_profile.hpp"

namespace ringtrain {

struct Message {
  int src = 0;
  int dst = 0;
  std::size_t elems = 0;
  friend bool operator==(const Message&, const Message&) = default;
};

// Calls f(span<const Message>) once per synchronous round of the ring
// schedule: 2(K-1) rounds of K concurrent messages.
template <typename F>
void for_each_ring_round(std::size_t n, int k, F&& f) {
  if (k <= 1) return;
  std::vector<Message> round(static_cast<std::size_t>(k));
  for (int phase = 0; phase < 2; ++phase)
    for (int i = 0; i < k - 1; ++i) {
      for (int r = 0; r < k; ++r) {
        const int s = phase == 0 ? r - i : r + 1 - i;
        const auto sg = ring_segment(n, k, ((s % k) + k) % k);
        round[static_cast<std::size_t>(r)] = {r, (r + 1) % k, sg.length};
      }
      f(std::span<const Message>(round));
    }
}

struct TreeShape {
  std::vector<int> height;  // longest path down to a leaf
  std::vector<int> depth;   // distance from the root
};

inline TreeShape binomial_shape(int k) {
  TreeShape t{std::vector<int>(static_cast<std::size_t>(k), 0),
              std::vector<int>(static_cast<std::size_t>(k), 0)};
  for (int v = k - 1; v >= 0; --v)
    for (int c : tree_children(v, k))
      t.height[v] = std::max(t.height[v], t.height[c] + 1);
  for (int v = 1; v < k; ++v) t.depth[v] = t.depth[tree_parent(v)] + 1;
  return t;
}

// Pipelined binomial reduce then broadcast. In the reduce, the link from v
// to its parent carries segment s in round s + height(v); in the broadcast
// the link into v carries segment s in round s + depth(parent(v)).
template <typename F>
void for_each_tree_round(std::size_t n, int k, std::size_t segment_bytes, F&& f) {
  if (k <= 1) return;
  const std::size_t seg = std::max<std::size_t>(1, segment_bytes / 4);
  const std::size_t S = tree_segment_count(n, seg);
  const auto shape = binomial_shape(k);
  const int H = shape.height[0];
  std::vector<std::vector<int>> by_height(static_cast<std::size_t>(H));
  std::vector<std::vector<int>> by_parent_depth(static_cast<std::size_t>(H));
  for (int v = 1; v < k; ++v) {
    by_height[shape.height[v]].push_back(v);
    by_parent_depth[shape.depth[tree_parent(v)]].push_back(v);
  }
  std::vector<Message> round;
  const auto rounds = static_cast<long long>(S) + H - 1;
  for (int phase = 0; phase < 2; ++phase)
    for (long long r = 0; r < rounds; ++r) {
      round.clear();
      for (int h = 0; h < H; ++h) {
        const long long s = r - h;
        if (s < 0 || s >= static_cast<long long>(S)) continue;
        const auto len = tree_segment(n, seg, static_cast<std::size_t>(s)).length;
        const auto& nodes = phase == 0 ? by_height[h] : by_parent_depth[h];
        for (int v : nodes)
          round.push_back(phase == 0 ? Message{v, tree_parent(v), len}
                                     : Message{tree_parent(v), v, len});
      }
      f(std::span<const Message>(round));
    }
}

template <typename F>
void for_each_round(Algorithm alg, std::size_t n, int k,
                    std::size_t tree_segment_bytes, F&& f) {
  if (alg == Algorithm::ring)
    for_each_ring_round(n, k, f);
  else
    for_each_tree_round(n, k, tree_segment_bytes, f);
}

// Simulated duration of one allreduce of n floats. Messages in a round
// travel concurrently, so a round lasts as long as its slowest message;
// with jitter that is latency plus the largest payload scaled by the
// largest of the round's jitter draws.
inline double collective_time(Algorithm alg, std::size_t n, int k,
                              LinkSampler& link,
                              std::size_t tree_segment_bytes =
                                  kDefaultTreeSegmentBytes) {
  double total = 0.0;
  const auto& p = link.profile();
  for_each_round(alg, n, k, tree_segment_bytes, [&](std::span<const Message> round) {
    std::size_t biggest = 0;
    for (const auto& m : round) biggest = std::max(biggest, m.elems);
    total += sim_transfer_time(4.0 * static_cast<double>(biggest), k, p,
                               link.max_jitter(round.size()));
  });
  return total;
}

}  // namespace ringtrain
