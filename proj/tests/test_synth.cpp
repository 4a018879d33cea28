#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "adatrack/errors.hpp"
#include "adatrack/synth.hpp"
#include "support.hpp"

using namespace adatrack;

namespace {

SynthSpec spec(std::uint64_t seed, int frames = 4) {
  SynthSpec s;
  s.seed = seed;
  s.frames = frames;
  s.size = {160, 128};
  s.init_box = {50, 40, 48, 40};
  return s;
}

SynthSpec deformed(DeformKind kind) {
  SynthSpec s = spec(11, 6);
  s.motion.shift = {1.5, -0.5};
  s.motion.zoom = 1.01;
  s.motion.rotation_deg = 1.0;
  s.deform.kind = kind;
  s.deform.amplitude = 3.0;
  s.deform.spatial_period = 48.0;
  s.deform.temporal_period = 10.0;
  s.deform.control_points = 6;
  s.deform.drift = 0.1;
  return s;
}

std::string error_of(const SynthSpec& s) {
  try {
    SynthSequence seq(s);
  } catch (const InputError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Synth, SeedDeterminism) {
  const SynthSequence a(deformed(DeformKind::Sinusoidal)), b(deformed(DeformKind::Sinusoidal));
  for (int t : {0, 3, 5}) {
    EXPECT_EQ(a.image(t), b.image(t));
    EXPECT_EQ(a.gt_box(t), b.gt_box(t));
  }
  SynthSpec other = deformed(DeformKind::Sinusoidal);
  other.seed = 12;
  EXPECT_NE(SynthSequence(other).image(0), a.image(0));
}

TEST(Synth, PureShift) {
  SynthSpec s = spec(1, 10);
  s.motion.shift = {1, 0};
  const SynthSequence seq(s);
  for (int t = 1; t < 10; ++t) {
    const FlowField f = seq.flow_from_prev(t);
    for (int y = 0; y < f.height(); y += 7)
      for (int x = 0; x < f.width(); x += 7) {
        EXPECT_NEAR(f.at(x, y).u, 1.0, 1e-6);
        EXPECT_NEAR(f.at(x, y).v, 0.0, 1e-6);
      }
    const BBox b = seq.gt_box(t), p = seq.gt_box(t - 1);
    EXPECT_NEAR(b.x - p.x, 1.0, 1e-9);
    EXPECT_NEAR(b.y - p.y, 0.0, 1e-9);
    EXPECT_NEAR(b.w, p.w, 1e-9);
  }
}

TEST(Synth, PureZoomFlowIsRadial) {
  SynthSpec s = spec(2, 3);
  s.motion.zoom = 1.01;
  const SynthSequence seq(s);
  const Point2 c = s.init_box.center();
  const FlowField f = seq.flow_from_prev(2);
  for (int y = 0; y < f.height(); y += 5)
    for (int x = 0; x < f.width(); x += 5) {
      const double r = std::hypot(x + 0.5 - c.u, y + 0.5 - c.v);
      EXPECT_NEAR(std::hypot(f.at(x, y).u, f.at(x, y).v), 0.01 * r, 1e-6);
    }
}

TEST(Synth, InverseUndoesForward) {
  for (DeformKind k : {DeformKind::None, DeformKind::Sinusoidal, DeformKind::ThinPlate}) {
    const SynthSequence seq(deformed(k));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ux(0.0, 160.0), uy(0.0, 128.0);
    for (int n = 0; n < 200; ++n) {
      const Point2 y{ux(rng), uy(rng)};
      const Point2 back = seq.forward(4, seq.inverse(4, y));
      EXPECT_NEAR(back.u, y.u, 1e-6);
      EXPECT_NEAR(back.v, y.v, 1e-6);
    }
  }
}

TEST(Synth, FlowReproducesNextFrame) {
  for (DeformKind k : {DeformKind::Sinusoidal, DeformKind::ThinPlate}) {
    const SynthSequence seq(deformed(k));
    const Image prev = seq.image(2), cur = seq.image(3);
    const FlowField f = seq.flow_from_prev(3);
    // Compare on an interior window whose targets stay in frame.
    const int x0 = 16, y0 = 16, x1 = 144, y1 = 112;
    Image a(x1 - x0, y1 - y0), b(x1 - x0, y1 - y0);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        a.at(x - x0, y - y0) = prev.at(x, y);
        b.at(x - x0, y - y0) = sample_bilinear(cur, x + 0.5 + f.at(x, y).u, y + 0.5 + f.at(x, y).v);
      }
    EXPECT_GE(fixtures::psnr(a, b), 45.0) << static_cast<int>(k);
  }
}

TEST(Synth, GtBoxIsMinMaxOfWarpedBoundary) {
  const SynthSequence seq(deformed(DeformKind::Sinusoidal));
  const BBox b = seq.spec().init_box;
  for (int t : {1, 4}) {
    double x0 = 1e9, y0 = 1e9, x1 = -1e9, y1 = -1e9;
    for (int k = 0; k < 1000; ++k) {
      // Walk the perimeter clockwise in 1000 equal parameter steps.
      const double a = (k % 250) / 250.0;
      Point2 p;
      switch (k / 250) {
        case 0: p = {b.x + a * b.w, b.y}; break;
        case 1: p = {b.right(), b.y + a * b.h}; break;
        case 2: p = {b.right() - a * b.w, b.bottom()}; break;
        default: p = {b.x, b.bottom() - a * b.h}; break;
      }
      const Point2 q = seq.forward(t, seq.inverse(0, p));
      x0 = std::min(x0, q.u);
      y0 = std::min(y0, q.v);
      x1 = std::max(x1, q.u);
      y1 = std::max(y1, q.v);
    }
    const BBox g = seq.gt_box(t);
    EXPECT_NEAR(g.x, x0, 1e-9);
    EXPECT_NEAR(g.y, y0, 1e-9);
    EXPECT_NEAR(g.right(), x1, 1e-9);
    EXPECT_NEAR(g.bottom(), y1, 1e-9);
  }
}

TEST(Synth, OccluderAreaIsSpriteFrameIntersection) {
  SynthSpec s = spec(4, 3);
  OccluderSpec o;
  o.size = 40;
  o.start = {10, 60};
  o.velocity = {4, 0};
  o.entry_frame = 1;
  o.value = 0.25f;
  s.occluder = o;
  const SynthSequence seq(s);
  auto count = [](const OcclusionMap& m) {
    int n = 0;
    for (std::uint8_t v : m.values()) n += v;
    return n;
  };
  EXPECT_EQ(count(seq.occlusion(0)), 0);
  // Frame 1: x in [-10, 30) clipped to [0, 30), y in [40, 80).
  EXPECT_EQ(count(seq.occlusion(1)), 30 * 40);
  EXPECT_EQ(count(seq.occlusion(2)), 34 * 40);
  EXPECT_EQ(seq.image(1).at(5, 50), 0.25f);
}

TEST(Synth, VisibilityFollowsSpriteCoverage) {
  SynthSpec s = spec(5, 3);
  OccluderSpec o;
  o.size = 60;
  o.start = s.init_box.center();
  o.entry_frame = 2;
  s.occluder = o;
  const SynthSequence seq(s);
  EXPECT_TRUE(seq.visible(1));
  EXPECT_FALSE(seq.visible(2));
}

TEST(Synth, IlluminationDrift) {
  SynthSpec s = spec(6, 3);
  s.illumination.bias_drift = 0.01;
  const SynthSequence seq(s);
  SynthSpec plain = spec(6, 3);
  const Image a = SynthSequence(plain).image(2), b = seq.image(2);
  for (int y = 0; y < 128; y += 9)
    for (int x = 0; x < 160; x += 9) {
      if (a.at(x, y) < 0.97f) {
        EXPECT_NEAR(b.at(x, y), a.at(x, y) + 0.02f, 1e-6);
      }
    }
}

TEST(Synth, GenerateMatchesRandomAccess) {
  const SynthSpec s = deformed(DeformKind::ThinPlate);
  const std::vector<SynthFrame> frames = generate(s);
  const SynthSequence seq(s);
  ASSERT_EQ(frames.size(), 6u);
  EXPECT_EQ(frames[3].image, seq.image(3));
  EXPECT_EQ(frames[3].gt_box, seq.gt_box(3));
  EXPECT_TRUE(frames[3].visible);
}

TEST(Synth, TexturesStayInRange) {
  for (TextureKind k : {TextureKind::Perlin, TextureKind::Checker}) {
    SynthSpec s = spec(7, 2);
    s.texture = k;
    s.texture_scale = 16;
    const Image img = SynthSequence(s).image(0);
    float lo = 1.0f, hi = 0.0f;
    for (float v : img.data()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    EXPECT_GE(lo, 0.0f);
    EXPECT_LE(hi, 1.0f);
    EXPECT_GT(hi - lo, 0.3f);
  }
}

TEST(Synth, ValidationErrors) {
  SynthSpec s = spec(8);
  s.frames = 1;
  EXPECT_FALSE(error_of(s).empty());

  s = spec(8);
  s.deform.kind = DeformKind::Sinusoidal;
  s.deform.amplitude = 17;  // 128 / 8 = 16
  s.deform.spatial_period = 400;
  EXPECT_EQ(error_of(s), "deformation too large");

  s = spec(8, 40);
  s.deform.kind = DeformKind::ThinPlate;
  s.deform.drift = 1.0;
  EXPECT_EQ(error_of(s), "deformation too large");

  s = spec(8);
  s.motion.zoom = 0.0;
  EXPECT_FALSE(error_of(s).empty());

  s = spec(8);
  s.occluder = OccluderSpec{};
  s.occluder->size = 0;
  EXPECT_FALSE(error_of(s).empty());

  s = spec(8);
  s.texture = TextureKind::File;
  EXPECT_FALSE(error_of(s).empty());

  const SynthSequence seq(spec(8));
  EXPECT_THROW(seq.image(4), InputError);
  EXPECT_THROW(seq.image(-1), InputError);
}
