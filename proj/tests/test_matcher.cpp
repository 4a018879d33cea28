#include <gtest/gtest.h>

#include <random>

#include "adatrack/errors.hpp"
#include "adatrack/matcher.hpp"

using namespace adatrack;

namespace {

FeatureMap random_cells(std::mt19937_64& rng, int w, int h, int c = 32) {
  std::normal_distribution<float> d;
  FeatureMap f(w, h, c);
  for (float& v : f.data()) v = d(rng);
  normalize_cells(f);
  return f;
}

/// 32x32-cell ROI of noise with `t` copied in at cell offset (ox, oy).
FeatureMap paste(const FeatureMap& t, int ox, int oy, std::mt19937_64& rng) {
  FeatureMap roi = random_cells(rng, 32, 32, t.channels());
  for (int j = 0; j < t.height(); ++j)
    for (int i = 0; i < t.width(); ++i) {
      const auto src = t.cell(i, j);
      std::copy(src.begin(), src.end(), roi.cell(ox + i, oy + j).begin());
    }
  return roi;
}

constexpr BBox kInit{64, 64, 64, 64};

}  // namespace

TEST(InterpolateCornerFlow, MatchesBruteForceBlend) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-20.0, 20.0), unit(0.0, 1.0);
  for (int n = 0; n < 1000; ++n) {
    const Point2 tl{d(rng), d(rng)}, br{d(rng), d(rng)};
    const double s = unit(rng), t = unit(rng);
    // Four-corner bilinear blend with the off-diagonal corners implied by the
    // axis-separable parameterization.
    const Point2 tr{br.u, tl.v}, bl{tl.u, br.v};
    const double u = (1 - s) * (1 - t) * tl.u + s * (1 - t) * tr.u + (1 - s) * t * bl.u + s * t * br.u;
    const double v = (1 - s) * (1 - t) * tl.v + s * (1 - t) * tr.v + (1 - s) * t * bl.v + s * t * br.v;
    const Point2 got = interpolate_corner_flow(tl, br, s, t);
    EXPECT_NEAR(got.u, u, 1e-6);
    EXPECT_NEAR(got.v, v, 1e-6);
  }
  const Point2 c = interpolate_corner_flow({1, 2}, {5, 6}, 0.0, 1.0);
  EXPECT_EQ(c.u, 1.0);
  EXPECT_EQ(c.v, 6.0);
}

TEST(MatchAnchor, SelfPasteIsAFixedPoint) {
  std::mt19937_64 rng(1);
  const FeatureMap t = random_cells(rng, 8, 8);
  const FeatureMap roi = paste(t, 8, 8, rng);
  const MatchResult m = match_anchor(t, roi, {}, kInit, 8);
  EXPECT_NEAR(m.bbox.x, kInit.x, 0.1);
  EXPECT_NEAR(m.bbox.y, kInit.y, 0.1);
  EXPECT_NEAR(m.bbox.w, kInit.w, 0.1);
  EXPECT_NEAR(m.bbox.h, kInit.h, 0.1);
  EXPECT_GE(m.confidence, 0.95);
  EXPECT_LE(m.iterations_run, 2);
}

TEST(MatchAnchor, FindsDisplacedCopy) {
  for (std::uint64_t seed : {2, 3, 4}) {
    std::mt19937_64 rng(seed);
    const FeatureMap t = random_cells(rng, 8, 8);
    // +16, +8 px is +2, +1 cells.
    const FeatureMap roi = paste(t, 10, 9, rng);
    const MatchResult m = match_anchor(t, roi, {}, kInit, 8);
    EXPECT_NEAR(m.bbox.x, kInit.x + 16, 1.0);
    EXPECT_NEAR(m.bbox.y, kInit.y + 8, 1.0);
    EXPECT_NEAR(m.bbox.right(), kInit.right() + 16, 1.0);
    EXPECT_NEAR(m.bbox.bottom(), kInit.bottom() + 8, 1.0);
  }
}

TEST(MatchAnchor, ConfidenceNonDecreasingOverIterations) {
  std::mt19937_64 rng(5);
  const FeatureMap t = random_cells(rng, 8, 8);
  const FeatureMap roi = paste(t, 11, 6, rng);
  double prev = -1.0;
  for (int k = 1; k <= 6; ++k) {
    const double c = match_anchor(t, roi, {}, kInit, k).confidence;
    EXPECT_GE(c, prev - 1e-12) << "iters " << k;
    prev = c;
  }
}

TEST(MatchAnchor, BoxIsInitPlusCornerFlows) {
  std::mt19937_64 rng(6);
  const FeatureMap t = random_cells(rng, 8, 8);
  const FeatureMap roi = paste(t, 9, 10, rng);
  const MatchResult m = match_anchor(t, roi, roi, kInit, 8);
  EXPECT_EQ(m.bbox.x, kInit.x + m.corner_flow_tl.u);
  EXPECT_EQ(m.bbox.y, kInit.y + m.corner_flow_tl.v);
  EXPECT_EQ(m.bbox.x + m.bbox.w, kInit.right() + m.corner_flow_br.u);
  EXPECT_EQ(m.bbox.y + m.bbox.h, kInit.bottom() + m.corner_flow_br.v);
  EXPECT_GE(m.confidence, 0.0);
  EXPECT_LE(m.confidence, 1.0);
}

TEST(MatchAnchor, TexturelessRoiReturnsInit) {
  std::mt19937_64 rng(7);
  const FeatureMap t = random_cells(rng, 8, 8);
  const MatchResult m = match_anchor(t, FeatureMap(32, 32, 32), {}, kInit, 8);
  EXPECT_EQ(m.bbox, kInit);
  EXPECT_EQ(m.confidence, 0.0);
}

TEST(MatchAnchor, Errors) {
  std::mt19937_64 rng(8);
  const FeatureMap t = random_cells(rng, 8, 8);
  const FeatureMap roi = random_cells(rng, 32, 32);
  EXPECT_THROW(match_anchor(t, roi, {}, kInit, 0), InputError);
  try {
    match_anchor(random_cells(rng, 40, 8), roi, {}, kInit, 4);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_STREQ(e.what(), "template exceeds search region");
  }
  EXPECT_THROW(match_anchor(t, roi, {}, {0, 0, 0, 10}, 4), InputError);
}
