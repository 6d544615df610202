#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "prn/codec_sim.hpp"
#include "prn/sideinfo.hpp"
#include "test_support.hpp"

namespace prn {
namespace {

using test::random_forest;
using test::random_plane;

std::size_t parse_error_line(const std::string& text) {
  try {
    parse_partition(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

std::string parse_error_message(const std::string& text) {
  try {
    parse_partition(text);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

TEST(ParsePartition, SmallFrameGivesOneClippedLeaf) {
  const auto f = parse_partition("16 16\n0\n");
  ASSERT_EQ(f.roots.size(), 1u);
  EXPECT_FALSE(f.roots[0].split());
  const CuRect r = clip_cu(f.roots[0], f.width, f.height);
  EXPECT_EQ(r.area(), 256u);
}

TEST(ParsePartition, SingleSplitGivesFourDepthOneLeaves) {
  const auto f = parse_partition("64 64\n10000\n");
  ASSERT_EQ(f.roots.size(), 1u);
  const auto& root = f.roots[0];
  ASSERT_TRUE(root.split());
  const std::size_t xs[] = {0, 32, 0, 32}, ys[] = {0, 0, 32, 32};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(root.children[i].depth, 1);
    EXPECT_FALSE(root.children[i].split());
    EXPECT_EQ(root.children[i].x, xs[i]);
    EXPECT_EQ(root.children[i].y, ys[i]);
    EXPECT_EQ(root.children[i].size(), 32u);
  }
}

TEST(ParsePartition, TruncatedTreeIsUnterminated) {
  EXPECT_EQ(parse_error_line("64 64\n1\n"), 2u);
  EXPECT_NE(parse_error_message("64 64\n1\n").find("unterminated quadtree"), std::string::npos);
  EXPECT_NE(parse_error_message("64 64\n1000\n").find("unterminated quadtree"), std::string::npos);
}

TEST(ParsePartition, SplitAtDepthThreeIsRejected) {
  // Root, first child, first grandchild all split, so the 8x8 node carries '1'.
  const std::string text = "64 64\n1111\n";
  EXPECT_EQ(parse_error_line(text), 2u);
  EXPECT_NE(parse_error_message(text).find("depth 3"), std::string::npos);
}

TEST(ParsePartition, CtuCountMismatchIsRejected) {
  EXPECT_NE(parse_error_message("128 64\n0\n").find("CTU count mismatch"), std::string::npos);
  EXPECT_NE(parse_error_message("64 64\n0\n0\n").find("CTU count mismatch"), std::string::npos);
  EXPECT_EQ(parse_error_line("65 64\n0\n"), 3u);
}

TEST(ParsePartition, MalformedHeaderAndCharacters) {
  EXPECT_EQ(parse_error_line("64\n0\n"), 1u);
  EXPECT_EQ(parse_error_line("0 64\n"), 1u);
  EXPECT_EQ(parse_error_line("-64 64\n0\n"), 1u);
  EXPECT_EQ(parse_error_line(""), 1u);
  EXPECT_EQ(parse_error_line("64 64\n2\n"), 2u);
  EXPECT_EQ(parse_error_line("64 64\n00\n"), 2u);
}

TEST(ParsePartition, RoundTripsRandomForests) {
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    const std::size_t w = 1 + rng.below(200), h = 1 + rng.below(200);
    const auto forest = random_forest(w, h, rng, rng.uniform(0.1, 0.9));
    const std::string text = serialize_partition(forest);
    EXPECT_EQ(serialize_partition(parse_partition(text)), text);
  }
}

TEST(Forest, LeavesTileEveryPixelExactlyOnce) {
  Rng rng(23);
  for (int i = 0; i < 10; ++i) {
    const std::size_t w = 1 + rng.below(150), h = 1 + rng.below(150);
    const auto f = random_forest(w, h, rng);
    EXPECT_EQ(f.roots.size(), ((w + 63) / 64) * ((h + 63) / 64));
    Image<int> cover(w, h, 0);
    for (const auto& r : f.roots) {
      for_each_leaf(r, [&](const CUNode& n) {
        const CuRect c = clip_cu(n, w, h);
        for (std::size_t y = c.y0; y < c.y1; ++y)
          for (std::size_t x = c.x0; x < c.x1; ++x) cover(x, y) += 1;
      });
    }
    for (int v : cover.data) ASSERT_EQ(v, 1);
  }
}

TEST(Mmcu, ConstantFrameGivesConstantMaps) {
  Rng rng(1);
  const auto frame = test::constant_plane(100, 70, 128);
  const auto maps = generate_mmcu(frame, random_forest(100, 70, rng));
  for (const auto& m : maps.level)
    for (float v : m.data) EXPECT_EQ(v, 128.0f);
}

TEST(Mmcu, UnsplitCtuCarriesMeanToAllLevels) {
  Rng rng(5);
  const auto frame = random_plane(64, 64, rng);
  const auto maps = generate_mmcu(frame, unsplit_forest(64, 64));
  double s = 0;
  for (auto v : frame.data) s += v;
  const auto mean = static_cast<float>(s / 4096.0);
  for (const auto& m : maps.level)
    for (float v : m.data) EXPECT_EQ(v, mean);
}

TEST(Mmcu, SingleSplitGivesQuadrantMeans) {
  Rng rng(6);
  const auto frame = random_plane(64, 64, rng);
  const auto forest = parse_partition("64 64\n10000\n");
  const auto maps = generate_mmcu(frame, forest);
  double total = 0;
  double quad[4] = {0, 0, 0, 0};
  for (std::size_t y = 0; y < 64; ++y)
    for (std::size_t x = 0; x < 64; ++x) {
      total += frame(x, y);
      quad[(y / 32) * 2 + x / 32] += frame(x, y);
    }
  for (std::size_t y = 0; y < 64; ++y)
    for (std::size_t x = 0; x < 64; ++x) {
      EXPECT_EQ(maps.level[0](x, y), static_cast<float>(total / 4096.0));
      for (std::size_t l = 1; l < 4; ++l) {
        EXPECT_EQ(maps.level[l](x, y), static_cast<float>(quad[(y / 32) * 2 + x / 32] / 1024.0));
      }
    }
}

TEST(Mmcu, MatchesOracleOnRandomCases) {
  Rng rng(31);
  for (int i = 0; i < 50; ++i) {
    const std::size_t w = 1 + rng.below(128), h = 1 + rng.below(128);
    const auto frame = random_plane(w, h, rng);
    const auto forest = random_forest(w, h, rng, rng.uniform(0.2, 0.95));
    const auto a = generate_mmcu(frame, forest);
    const auto b = mmcu_oracle(frame, forest);
    for (std::size_t l = 0; l < 4; ++l) ASSERT_EQ(a.level[l].data, b.level[l].data) << "case " << i;
  }
}

TEST(Mmcu, MatchesOracleOnFullySplitForest) {
  Rng rng(32);
  const auto frame = random_plane(128, 96, rng);
  SplitThresholds zero{0, 0, 0};
  const auto forest = build_partition(frame, zero);
  const auto a = generate_mmcu(frame, forest);
  const auto b = mmcu_oracle(frame, forest);
  for (std::size_t l = 0; l < 4; ++l) EXPECT_EQ(a.level[l].data, b.level[l].data);
}

// Where the depth-(l-1) CU containing a pixel is a leaf, level l repeats
// level l-1 at that pixel.
TEST(Mmcu, UnchangedRuleHoldsPixelwise) {
  Rng rng(33);
  for (int i = 0; i < 10; ++i) {
    const std::size_t w = 16 + rng.below(120), h = 16 + rng.below(120);
    const auto frame = random_plane(w, h, rng);
    const auto forest = random_forest(w, h, rng);
    const auto maps = generate_mmcu(frame, forest);
    Image<int> leaf_depth(w, h, 0);
    for (const auto& r : forest.roots)
      for_each_leaf(r, [&](const CUNode& n) {
        const CuRect c = clip_cu(n, w, h);
        for (std::size_t y = c.y0; y < c.y1; ++y)
          for (std::size_t x = c.x0; x < c.x1; ++x) leaf_depth(x, y) = n.depth;
      });
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (int l = 1; l < 4; ++l)
          if (leaf_depth(x, y) <= l - 1) {
            ASSERT_EQ(maps.level[static_cast<std::size_t>(l)](x, y),
                      maps.level[static_cast<std::size_t>(l - 1)](x, y));
          }
  }
}

TEST(Mmcu, ConservationOfCtuMean) {
  Rng rng(34);
  const std::size_t w = 150, h = 100;
  const auto frame = random_plane(w, h, rng);
  const auto forest = random_forest(w, h, rng);
  const auto maps = generate_mmcu(frame, forest);
  for (const auto& root : forest.roots) {
    const CuRect r = clip_cu(root, w, h);
    const double mean = cu_sum(frame, r) / static_cast<double>(r.area());
    for (const auto& m : maps.level) {
      double s = 0;
      for (std::size_t y = r.y0; y < r.y1; ++y)
        for (std::size_t x = r.x0; x < r.x1; ++x) s += m(x, y);
      EXPECT_NEAR(s / static_cast<double>(r.area()), mean, 1e-6 * mean);
    }
  }
}

TEST(Mmcu, LeafLevelIsConstantLeafMean) {
  Rng rng(35);
  const std::size_t w = 90, h = 130;
  const auto frame = random_plane(w, h, rng);
  const auto forest = random_forest(w, h, rng);
  const auto maps = generate_mmcu(frame, forest);
  for (const auto& root : forest.roots)
    for_each_leaf(root, [&](const CUNode& n) {
      const CuRect c = clip_cu(n, w, h);
      if (c.area() == 0) return;
      const auto mean = static_cast<float>(cu_sum(frame, c) / static_cast<double>(c.area()));
      for (std::size_t y = c.y0; y < c.y1; ++y)
        for (std::size_t x = c.x0; x < c.x1; ++x) ASSERT_EQ(maps.level[3](x, y), mean);
    });
}

TEST(Mmcu, CoarsestMapIsConstantPerCtu) {
  Rng rng(36);
  const auto frame = random_plane(128, 128, rng);
  const auto maps = generate_mmcu(frame, random_forest(128, 128, rng));
  for (std::size_t y = 0; y < 128; ++y)
    for (std::size_t x = 0; x < 128; ++x)
      EXPECT_EQ(maps.level[0](x, y), maps.level[0]((x / 64) * 64, (y / 64) * 64));
}

TEST(Mmcu, DimensionMismatchIsRejected) {
  Rng rng(37);
  const auto frame = random_plane(64, 64, rng);
  EXPECT_THROW(generate_mmcu(frame, unsplit_forest(65, 64)), DimensionError);
  EXPECT_THROW(mmcu_oracle(frame, unsplit_forest(64, 32)), DimensionError);
}

}  // namespace
}  // namespace prn
