#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "maskfeat/error.hpp"
#include "maskfeat/masking.hpp"
#include "support/generators.hpp"

using namespace maskfeat;

namespace {

MaskConfig config(MaskStrategy s, double ratio, std::uint64_t seed) {
  MaskConfig cfg;
  cfg.strategy = s;
  cfg.target_ratio = ratio;
  cfg.seed = seed;
  return cfg;
}

bool temporally_constant(const MaskMap& m) {
  for (int ti = 1; ti < m.t(); ++ti)
    for (int y = 0; y < m.h(); ++y)
      for (int x = 0; x < m.w(); ++x)
        if (m(ti, y, x) != m(0, y, x)) return false;
  return true;
}

MaskMap paint_box(int t, int h, int w, const MaskBox& b) {
  MaskMap m(t, h, w);
  for (int ti = b.t0; ti < b.t0 + b.dt; ++ti)
    for (int y = b.y0; y < b.y0 + b.dh; ++y)
      for (int x = b.x0; x < b.x0 + b.dw; ++x) m(ti, y, x) = true;
  return m;
}

}  // namespace

TEST(MaskMap, CountsAndIndices) {
  MaskMap m(2, 3, 4);
  EXPECT_EQ(m.size(), 24);
  m(1, 2, 3) = true;
  m(0, 0, 1) = true;
  EXPECT_EQ(m.count(), 2);
  EXPECT_DOUBLE_EQ(m.ratio(), 2.0 / 24.0);
  EXPECT_EQ(m.masked_indices(), (std::vector<Eigen::Index>{1, 23}));
  EXPECT_DOUBLE_EQ(m.frame_ratio(1), 1.0 / 12.0);
  EXPECT_THROW(MaskMap(0, 3, 3), InvalidInput);
}

TEST(MaskConfig, Validation) {
  MaskConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.target_ratio = 0.0;
  EXPECT_THROW(cfg.validate(), InvalidInput);
  cfg.target_ratio = 1.0;
  EXPECT_THROW(cfg.validate(), InvalidInput);
  cfg = MaskConfig{};
  cfg.aspect_range = {0.5, 3.0};
  EXPECT_THROW(cfg.validate(), InvalidInput);
}

TEST(BlockMask, DefaultRatioOnImageGrid) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    MaskTrace trace;
    const auto m = generate_mask(1, 14, 14, config(MaskStrategy::Block2D, 0.4, seed), &trace);
    ASSERT_GE(m.count(), 79);  // ceil(0.4 * 196)
    ASSERT_FALSE(trace.empty());
    const auto& last = trace.back();
    ASSERT_LE(m.count(), 79 + last.dh * last.dw);
  }
}

TEST(BlockMask, DeterministicForSeed) {
  const auto a = generate_mask(1, 14, 14, config(MaskStrategy::Block2D, 0.4, 42));
  const auto b = generate_mask(1, 14, 14, config(MaskStrategy::Block2D, 0.4, 42));
  EXPECT_TRUE(a == b);
  const auto c = generate_mask(1, 14, 14, config(MaskStrategy::Block2D, 0.4, 43));
  EXPECT_FALSE(a == c);
}

TEST(BlockMask, NearFullRatio) {
  auto cfg = config(MaskStrategy::Block2D, 1.0 - 1.0 / 196.0, 5);
  cfg.max_attempts = 100000;
  const auto m = generate_mask(1, 14, 14, cfg);
  EXPECT_GE(m.count(), 195);
}

TEST(BlockMask, PartialMaskWhenNothingFits) {
  // Near-square blocks of >= 4 tokens are at least 2 rows tall; the grid has one row.
  auto cfg = config(MaskStrategy::Block2D, 0.5, 3);
  cfg.aspect_range = {0.9, 1.0 / 0.9};
  cfg.max_attempts = 20;
  try {
    generate_mask(1, 1, 8, cfg);
    FAIL() << "expected PartialMask";
  } catch (const PartialMask& e) {
    EXPECT_EQ(e.achieved_ratio(), 0.0);
  }
}

TEST(BlockMask, GridSmallerThanMinBlock) {
  EXPECT_THROW(generate_mask(1, 1, 3, config(MaskStrategy::Block2D, 0.4, 0)), InvalidInput);
  EXPECT_THROW(generate_mask(2, 14, 14, config(MaskStrategy::Block2D, 0.4, 0)), InvalidInput);
}

TEST(FrameMask, PerFrameRatioAndDistinctFrames) {
  int all_distinct = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto m = generate_mask(8, 14, 14, config(MaskStrategy::Frame, 0.4, seed));
    double mean = 0.0;
    for (int ti = 0; ti < 8; ++ti) {
      ASSERT_GE(m.frame_ratio(ti), 0.4);
      mean += m.frame_ratio(ti) / 8.0;
    }
    ASSERT_NEAR(m.ratio(), mean, 1e-12);
    std::set<std::vector<bool>> frames;
    for (int ti = 0; ti < 8; ++ti) {
      std::vector<bool> bits;
      for (int i = 0; i < 196; ++i) bits.push_back(m.bits()[ti * 196 + i]);
      frames.insert(bits);
    }
    all_distinct += frames.size() == 8;
  }
  EXPECT_GE(all_distinct, 990);
}

TEST(FrameMask, SingleFrameMatchesBlockDistribution) {
  // Same stream, same draws: with t = 1 frame masking is block masking.
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng a(seed), b(seed);
    const auto cfg = config(MaskStrategy::Frame, 0.4, seed);
    ASSERT_TRUE(frame_mask(1, 14, 14, cfg, a) == block_mask_2d(14, 14, cfg, b));
  }
}

TEST(TubeMask, TemporallyConstant) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const auto m = generate_mask(8, 14, 14, config(MaskStrategy::Tube, 0.4, seed));
    ASSERT_TRUE(temporally_constant(m));
    ASSERT_DOUBLE_EQ(m.ratio(), m.frame_ratio(0));
  }
}

TEST(TubeMask, SingleSliceEqualsBlockMask) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng a(seed), b(seed);
    const auto cfg = config(MaskStrategy::Tube, 0.4, seed);
    ASSERT_TRUE(tube_mask(1, 14, 14, cfg, a) == block_mask_2d(14, 14, cfg, b));
  }
}

TEST(CubeMask, BoxesAreContiguousAndUnionToMask) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    MaskTrace trace;
    const auto m = generate_mask(8, 14, 14, config(MaskStrategy::Cube, 0.4, seed), &trace);
    MaskMap u(8, 14, 14);
    for (const auto& box : trace) {
      ASSERT_GE(box.t0, 0);
      ASSERT_GE(box.dt, 1);
      ASSERT_LE(box.t0 + box.dt, 8);
      ASSERT_LE(box.y0 + box.dh, 14);
      ASSERT_LE(box.x0 + box.dw, 14);
      // A painted box is exactly one axis-aligned run of dt*dh*dw bits.
      const auto single = paint_box(8, 14, 14, box);
      ASSERT_EQ(single.count(), Eigen::Index(box.dt) * box.dh * box.dw);
      u.bits() = u.bits() || single.bits();
    }
    ASSERT_TRUE(u == m);
  }
}

TEST(CubeMask, SingleFrameBehavesLikeBlockMask) {
  double cube = 0.0, block = 0.0;
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    cube += generate_mask(1, 14, 14, config(MaskStrategy::Cube, 0.4, seed)).ratio();
    block += generate_mask(1, 14, 14, config(MaskStrategy::Block2D, 0.4, seed)).ratio();
  }
  EXPECT_NEAR(cube / 2000, block / 2000, 0.005);
}

TEST(Masking, StopRuleSoundnessProperty) {
  testsupport::Engine e(41);
  for (int trial = 0; trial < 400; ++trial) {
    const auto strategy = static_cast<MaskStrategy>(testsupport::uniform_int(e, 1, 3));
    const int t = testsupport::uniform_int(e, 1, 8), h = testsupport::uniform_int(e, 4, 16),
              w = testsupport::uniform_int(e, 4, 16);
    const double ratio = testsupport::uniform_real(e, 0.05, 0.9);
    MaskTrace trace;
    auto cfg = config(strategy, ratio, static_cast<std::uint64_t>(trial));
    cfg.max_attempts = 1000;
    const auto m = generate_mask(t, h, w, cfg, &trace);
    const double total = strategy == MaskStrategy::Frame ? double(h) * w : double(t) * h * w;
    int largest = 0;
    for (const auto& b : trace) {
      const int vol = (strategy == MaskStrategy::Cube ? b.dt : 1) * b.dh * b.dw;
      largest = std::max(largest, vol);
    }
    if (strategy == MaskStrategy::Frame) {
      for (int ti = 0; ti < t; ++ti) {
        ASSERT_GE(m.frame_ratio(ti), ratio);
        ASSERT_LE(m.frame_ratio(ti), ratio + largest / total + 1e-12);
      }
    } else {
      ASSERT_GE(m.ratio(), ratio);
      const double per = strategy == MaskStrategy::Tube ? double(h) * w : total;
      ASSERT_LE(m.ratio(), ratio + largest / per + 1e-12);
    }
  }
}

TEST(Masking, DeterminismAllStrategies) {
  for (auto s : {MaskStrategy::Frame, MaskStrategy::Tube, MaskStrategy::Cube}) {
    for (std::uint64_t seed : {0ull, 7ull, 123456789ull}) {
      EXPECT_TRUE(generate_mask(4, 10, 12, config(s, 0.6, seed)) == generate_mask(4, 10, 12, config(s, 0.6, seed)));
    }
  }
}

TEST(ResizeMask, ExampleBlocks) {
  MaskMap m(1, 2, 2);
  m(0, 0, 0) = true;
  const auto r = resize_mask_nearest(m, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) EXPECT_EQ(r(0, y, x), y < 2 && x < 2);
}

TEST(ResizeMask, IdentityAndErrors) {
  testsupport::Engine e(42);
  const auto m = testsupport::random_mask(e, 2, 14, 14);
  EXPECT_TRUE(resize_mask_nearest(m, 14, 14) == m);
  EXPECT_THROW(resize_mask_nearest(m, 20, 28), InvalidInput);
  EXPECT_THROW(resize_mask_nearest(m, 7, 7), InvalidInput);
}

TEST(ResizeMask, PreservesRatioProperty) {
  testsupport::Engine e(43);
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = testsupport::random_mask(e, testsupport::uniform_int(e, 1, 3), testsupport::uniform_int(e, 1, 9),
                                            testsupport::uniform_int(e, 1, 9), testsupport::uniform_real(e, 0, 1));
    const int fy = testsupport::uniform_int(e, 1, 4), fx = testsupport::uniform_int(e, 1, 4);
    const auto r = resize_mask_nearest(m, m.h() * fy, m.w() * fx);
    ASSERT_EQ(r.count(), m.count() * fy * fx);
    ASSERT_EQ(r.ratio(), m.ratio());
  }
}

TEST(MaskStrategyNames, RoundTrip) {
  for (auto s : {MaskStrategy::Block2D, MaskStrategy::Frame, MaskStrategy::Tube, MaskStrategy::Cube}) {
    EXPECT_EQ(parse_mask_strategy(to_string(s)), s);
  }
  EXPECT_THROW(parse_mask_strategy("random"), InvalidInput);
}
