#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "ringtrain/flat_buffer.hpp"
#include "ringtrain/profile.hpp"

using namespace ringtrain;

TEST(Pack, Concatenates) {
  GradientSet g;
  g.chunks.emplace_back(std::vector<std::size_t>{3}, std::vector<float>{1, 2, 3});
  g.chunks.emplace_back(std::vector<std::size_t>{2}, std::vector<float>{4, 5});
  const auto b = pack(g);
  EXPECT_EQ(b.data, (std::vector<float>{1, 2, 3, 4, 5}));
  ASSERT_EQ(b.layout.size(), 2u);
  EXPECT_EQ(b.layout[0].chunk_index, 0u);
  EXPECT_EQ(b.layout[0].offset, 0u);
  EXPECT_EQ(b.layout[0].length, 3u);
  EXPECT_EQ(b.layout[1].chunk_index, 1u);
  EXPECT_EQ(b.layout[1].offset, 3u);
  EXPECT_EQ(b.layout[1].length, 2u);
  EXPECT_EQ(unpack(b), g);
}

TEST(Pack, SingleChunk) {
  GradientSet g;
  g.chunks.emplace_back(std::vector<std::size_t>{2, 2}, std::vector<float>{1, -2, 3, -4});
  const auto b = pack(g);
  EXPECT_EQ(b.data, g.chunks[0].storage());
  EXPECT_EQ(unpack(b), g);
}

TEST(Pack, GoogleNetRoundTripIsBitwise) {
  const auto p = build_profile("GoogleNet");
  ASSERT_EQ(p.num_chunks, 116);
  auto g = gradients_for_sizes(p.chunk_elems, 0.f);
  std::mt19937 rng(3);
  std::uniform_real_distribution<float> u(-1, 1);
  for (auto& c : g.chunks)
    for (auto& v : c.values()) v = u(rng);
  g.chunks[5][0] = -0.0f;
  const auto b = pack(g);
  EXPECT_EQ(b.size(), p.total_elements());
  const auto back = unpack(b);
  ASSERT_EQ(back.chunks.size(), g.chunks.size());
  for (std::size_t c = 0; c < g.chunks.size(); ++c)
    ASSERT_EQ(std::memcmp(back.chunks[c].data(), g.chunks[c].data(), 4 * g.chunks[c].size()), 0);
}

TEST(Pack, CorruptLayout) {
  GradientSet g;
  g.chunks.emplace_back(std::vector<std::size_t>{3});
  g.chunks.emplace_back(std::vector<std::size_t>{2});
  auto b = pack(g);
  auto gap = b;
  gap.layout[1].offset = 4;
  EXPECT_THROW(unpack(gap), LayoutError);
  auto order = b;
  std::swap(order.layout[0], order.layout[1]);
  EXPECT_THROW(unpack(order), LayoutError);
  auto shortb = b;
  shortb.data.pop_back();
  EXPECT_THROW(unpack(shortb), LayoutError);
  auto shape = b;
  shape.layout[0].shape = {4};
  EXPECT_THROW(unpack(shape), LayoutError);
}
