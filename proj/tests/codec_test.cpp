#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "prn/codec_sim.hpp"
#include "test_support.hpp"

namespace prn {
namespace {

using test::random_plane;

TEST(Degrade, ConstantFrameAtUnitStepIsNearLossless) {
  const auto frame = test::constant_plane(37, 21, 128);
  EXPECT_DOUBLE_EQ(QPConfig(4).step(), 1.0);
  const auto r = degrade(frame, QPConfig(4));
  ASSERT_TRUE(r.recon.same_size(frame));
  for (std::size_t i = 0; i < frame.size(); ++i) {
    EXPECT_LE(std::abs(int(r.recon.data[i]) - int(frame.data[i])), 1);
  }
}

TEST(Degrade, UnitStepIsNearLosslessOnRandomFrames) {
  Rng rng(2);
  for (int i = 0; i < 5; ++i) {
    const auto frame = random_plane(8 + rng.below(60), 8 + rng.below(60), rng);
    EXPECT_GE(psnr(frame, degrade(frame, QPConfig(4)).recon), 48.0);
  }
}

TEST(Degrade, QualityFallsAndRateFallsAsQpRises) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto frame = synthetic_image(96, 80, seed);
    double last_psnr = 1e9;
    std::uint64_t last_bits = ~0ull;
    for (int qp : {22, 27, 32, 37}) {
      const auto r = degrade(frame, QPConfig(qp));
      const double p = psnr(frame, r.recon);
      EXPECT_LE(p, last_psnr) << "qp " << qp;
      EXPECT_LT(r.bits, last_bits) << "qp " << qp;
      last_psnr = p;
      last_bits = r.bits;
    }
  }
}

// Frozen regression: qp 37 on a 128x128 synthetic scene.
TEST(Degrade, Qp37OnSyntheticSceneIsInTheBlockyRange) {
  const auto frame = synthetic_image(128, 128, 42);
  const double p = psnr(frame, degrade(frame, QPConfig(37)).recon);
  EXPECT_GT(p, 25.0);
  EXPECT_LT(p, 35.0);
}

TEST(Degrade, StepLawAndQpBounds) {
  EXPECT_NEAR(QPConfig(10).step(), 2.0, 1e-12);
  EXPECT_NEAR(QPConfig(22).step(), 8.0, 1e-12);
  for (int q = 1; q <= 51; ++q) EXPECT_GT(QPConfig(q).step(), QPConfig(q - 1).step());
  EXPECT_THROW(QPConfig(52), ArgumentError);
  EXPECT_THROW(QPConfig(-1), ArgumentError);
  EXPECT_THROW(degrade(LumaPlane{}, QPConfig(22)), ArgumentError);
}

TEST(Degrade, RateProxyMatchesDirectCount) {
  // A constant block has a single DC coefficient of 8 * value.
  const auto frame = test::constant_plane(8, 8, 100);
  const auto r = degrade(frame, QPConfig(4));
  // level 800: 1 + 2*floor(log2 800) + 1 = 1 + 18 + 1.
  EXPECT_EQ(r.bits, 20u);
}

TEST(Partition, ConstantFrameStaysUnsplit) {
  const auto f = build_partition(test::constant_plane(200, 130, 77));
  for (const auto& r : f.roots) EXPECT_FALSE(r.split());
}

TEST(Partition, ZeroThresholdsSplitFully) {
  Rng rng(4);
  const auto frame = random_plane(128, 128, rng);
  const auto f = build_partition(frame, SplitThresholds{0, 0, 0});
  for (const auto& r : f.roots) {
    int leaves = 0;
    for_each_leaf(r, [&](const CUNode& n) {
      EXPECT_EQ(n.depth, 3);
      ++leaves;
    });
    EXPECT_EQ(leaves, 64);
  }
}

TEST(Partition, SingleTexturedPatchSplitsAlongItsChainOnly) {
  Rng rng(5);
  auto frame = test::constant_plane(64, 64, 100);
  const std::size_t px = 40, py = 16;  // an 8x8 patch
  for (std::size_t y = py; y < py + 8; ++y)
    for (std::size_t x = px; x < px + 8; ++x) frame(x, y) = static_cast<std::uint8_t>(rng.coin() ? 0 : 255);
  // One 8x8 patch cannot lift a whole CTU's variance to 400, so the CTU
  // threshold is lowered for this probe.
  const SplitThresholds thr{200.0, 200.0, 100.0};
  const auto f = build_partition(frame, thr);
  // The variance oracle: every CU containing the patch reaches its
  // threshold, every other CU has zero variance.
  const CUNode* n = &f.roots[0];
  for (int d = 0; d < 3; ++d) {
    const CuRect r = clip_cu(*n, 64, 64);
    ASSERT_GE(cu_variance(frame, r), thr[static_cast<std::size_t>(d)]);
    ASSERT_TRUE(n->split()) << "depth " << d;
    for (const auto& c : n->children) {
      const bool contains = c.x <= px && px < c.x + c.size() && c.y <= py && py < c.y + c.size();
      if (!contains) EXPECT_FALSE(c.split());
    }
    for (const auto& c : n->children)
      if (c.x <= px && px < c.x + c.size() && c.y <= py && py < c.y + c.size()) n = &c;
  }
  EXPECT_EQ(n->depth, 3);
  EXPECT_EQ(n->x, px);
  EXPECT_EQ(n->y, py);
}

TEST(Partition, DeterministicAndIndependentOfCtuOrder) {
  const auto frame = synthetic_image(192, 128, 9);
  const auto a = build_partition(frame);
  EXPECT_EQ(serialize_partition(a), serialize_partition(build_partition(frame)));
  // Each CTU built in isolation from its own crop gives the same tree.
  for (std::size_t i = 0; i < a.roots.size(); ++i) {
    const auto& root = a.roots[i];
    const auto tile = crop(frame, root.x, root.y, 64, 64);
    EXPECT_EQ(serialize_ctu(build_partition(tile).roots[0]), serialize_ctu(root));
  }
}

TEST(Psnr, CapAndClosedFormCases) {
  Rng rng(6);
  const auto a = random_plane(20, 10, rng);
  EXPECT_EQ(psnr(a, a), 100.0);
  auto b = a;
  for (auto& v : b.data) v = static_cast<std::uint8_t>(v == 255 ? 254 : v + 1);
  EXPECT_NEAR(psnr(a, b), 48.1308, 1e-3);
  EXPECT_NEAR(psnr(test::constant_plane(4, 4, 0), test::constant_plane(4, 4, 255)), 0.0, 1e-12);
  EXPECT_THROW(psnr(a, test::constant_plane(10, 20, 0)), DimensionError);
}

TEST(Psnr, IsSymmetric) {
  Rng rng(7);
  for (int i = 0; i < 10; ++i) {
    const auto a = random_plane(16, 16, rng), b = random_plane(16, 16, rng);
    EXPECT_EQ(psnr(a, b), psnr(b, a));
  }
}

std::vector<RDPoint> smooth_curve(Rng& rng) {
  std::vector<RDPoint> c;
  double rate = rng.uniform(500, 2000), q = rng.uniform(28, 32);
  const std::size_t n = 4 + rng.below(3);
  for (std::size_t i = 0; i < n; ++i) {
    c.push_back({rate, q});
    rate *= rng.uniform(1.4, 2.0);
    q += rng.uniform(1.5, 3.0);
  }
  return c;
}

// Composite Simpson on the two fitted cubics, written independently of
// Cubic::integral.
double simpson_bd(const std::vector<RDPoint>& anchor, const std::vector<RDPoint>& test) {
  const Cubic pa = fit_log_rate(anchor), pt = fit_log_rate(test);
  const PsnrInterval iv = psnr_overlap(anchor, test);
  const int n = 20000;
  const double h = (iv.hi - iv.lo) / n;
  double s = 0;
  for (int i = 0; i <= n; ++i) {
    const double x = iv.lo + h * i;
    const double wgt = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
    s += wgt * (pt(x) - pa(x));
  }
  const double avg = s * h / 3.0 / (iv.hi - iv.lo);
  return (std::pow(10.0, avg) - 1.0) * 100.0;
}

TEST(BdRate, IdenticalCurvesGiveZero) {
  Rng rng(8);
  const auto c = smooth_curve(rng);
  EXPECT_NEAR(bd_rate(c, c), 0.0, 1e-12);
}

TEST(BdRate, DoubledRatesGivePlusOneHundredPercent) {
  Rng rng(9);
  const auto a = smooth_curve(rng);
  auto t = a;
  for (auto& p : t) p.rate *= 2;
  EXPECT_NEAR(bd_rate(a, t), 100.0, 1e-6);
}

TEST(BdRate, MatchesQuadratureOracle) {
  Rng rng(10);
  for (int i = 0; i < 20; ++i) {
    const auto a = smooth_curve(rng);
    auto t = a;
    for (auto& p : t) {
      p.rate *= rng.uniform(0.7, 1.2);
      p.psnr += rng.uniform(-0.4, 0.4);
    }
    EXPECT_NEAR(bd_rate(a, t), simpson_bd(a, t), 1e-9) << "pair " << i;
  }
}

TEST(BdRate, AntisymmetricInLogDomain) {
  Rng rng(11);
  for (int i = 0; i < 20; ++i) {
    const auto a = smooth_curve(rng);
    auto t = a;
    for (auto& p : t) p.rate *= rng.uniform(0.8, 1.1);
    const double ab = bd_rate(a, t), ba = bd_rate(t, a);
    EXPECT_NEAR((1 + ab / 100) * (1 + ba / 100), 1.0, 1e-6);
  }
}

TEST(BdRate, Errors) {
  std::vector<RDPoint> three{{100, 30}, {200, 32}, {400, 34}};
  std::vector<RDPoint> four{{100, 30}, {200, 32}, {400, 34}, {800, 36}};
  std::vector<RDPoint> far{{100, 40}, {200, 42}, {400, 44}, {800, 46}};
  EXPECT_THROW(bd_rate(three, four), ArgumentError);
  EXPECT_THROW(bd_rate(four, far), ArgumentError);
  std::vector<RDPoint> bad = four;
  bad[0].rate = 0;
  EXPECT_THROW(bd_rate(bad, four), ArgumentError);
}

TEST(RdCurve, ParseFormatRoundTrip) {
  const std::vector<RDPoint> c{{1000.5, 30.25}, {2000, 32.5}};
  const auto back = parse_rd_curve("# header\n" + format_rd_curve(c));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].rate, 1000.5);
  EXPECT_EQ(back[1].psnr, 32.5);
  EXPECT_THROW(parse_rd_curve("100 30\n100\n"), ParseError);
  EXPECT_THROW(parse_rd_curve("100 30 7\n"), ParseError);
}

TEST(Synthetic, SequenceTranslatesExactly) {
  const auto seq = synthetic_sequence(48, 40, 3, 77, 2);
  ASSERT_EQ(seq.size(), 3u);
  EXPECT_EQ(synthetic_sequence(48, 40, 3, 77, 2), seq);
  // Find the per-frame shift by exhaustive search on the overlap.
  int best_dx = 99, best_dy = 99;
  for (int dy = -2; dy <= 2; ++dy)
    for (int dx = -2; dx <= 2; ++dx) {
      bool same = true;
      for (std::size_t y = 4; y < 36 && same; ++y)
        for (std::size_t x = 4; x < 44 && same; ++x)
          same = seq[1](x, y) == seq[0](static_cast<std::size_t>(static_cast<long>(x) + dx),
                                        static_cast<std::size_t>(static_cast<long>(y) + dy));
      if (same) {
        best_dx = dx;
        best_dy = dy;
      }
    }
  ASSERT_NE(best_dx, 99);
  for (std::size_t y = 4; y < 36; ++y)
    for (std::size_t x = 4; x < 44; ++x)
      EXPECT_EQ(seq[2](x, y), seq[1](static_cast<std::size_t>(static_cast<long>(x) + best_dx),
                                     static_cast<std::size_t>(static_cast<long>(y) + best_dy)));
}

}  // namespace
}  // namespace prn
