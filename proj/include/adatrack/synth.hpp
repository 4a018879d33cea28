#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adatrack/flow.hpp"
#include "adatrack/geometry.hpp"

namespace adatrack {

enum class TextureKind { Perlin, Checker, File };
enum class DeformKind { None, Sinusoidal, ThinPlate };
enum class SpriteShape { Square, Disk };

/// Per-frame similarity applied about the object's current center.
struct MotionSpec {
  Point2 shift;
  double zoom = 1.0;
  double rotation_deg = 0.0;
};

struct DeformSpec {
  DeformKind kind = DeformKind::None;
  /// Sinusoidal: amplitude px, spatial period px, temporal period frames.
  double amplitude = 0.0;
  double spatial_period = 64.0;
  double temporal_period = 40.0;
  /// Thin-plate: control points scattered over the init box, each drifting
  /// at `drift` px/frame in a seeded direction.
  int control_points = 8;
  double drift = 0.0;
};

struct IlluminationSpec {
  double gain_drift = 0.0;
  double bias_drift = 0.0;
};

/// Flat-colored sprite composited over the warped scene on frames
/// [entry_frame, exit_frame); exit_frame < 0 means it never leaves.
struct OccluderSpec {
  SpriteShape shape = SpriteShape::Square;
  double size = 40.0;
  int entry_frame = 0;
  int exit_frame = -1;
  Point2 start;
  Point2 velocity;
  float value = 0.0f;
};

struct SynthSpec {
  std::uint64_t seed = 0;
  int frames = 2;
  Size2 size{256, 256};
  TextureKind texture = TextureKind::Perlin;
  std::string texture_path;
  /// Coarsest texture period, px.
  double texture_scale = 64.0;
  MotionSpec motion;
  DeformSpec deform;
  IlluminationSpec illumination;
  double noise_sigma = 0.0;
  std::optional<OccluderSpec> occluder;
  BBox init_box{96, 96, 64, 64};

  /// Throws InputError on malformed specs and "deformation too large" on
  /// non-invertible warps.
  void validate() const;
};

struct SynthFrame {
  Image image;
  FlowField gt_flow_from_prev;
  OcclusionMap gt_occlusion;
  BBox gt_box;
  /// False when the sprite covers more than half of gt_box.
  bool visible = true;
};

/// Random-access renderer; frames are independent given the spec, so they can
/// be produced lazily or in parallel.
class SynthSequence {
 public:
  explicit SynthSequence(SynthSpec spec);

  const SynthSpec& spec() const { return spec_; }
  int frames() const { return spec_.frames; }

  /// Reference-texture point -> frame-t position.
  Point2 forward(int t, Point2 r) const;
  /// Frame-t position -> reference-texture point.
  Point2 inverse(int t, Point2 y) const;
  /// Sprite coverage of a frame-t pixel center.
  bool occluded(int t, Point2 y) const;

  Image image(int t) const;
  FlowField flow_from_prev(int t) const;
  OcclusionMap occlusion(int t) const;
  BBox gt_box(int t) const;
  bool visible(int t) const;
  SynthFrame frame(int t) const;

 private:
  struct Affine {
    std::array<double, 4> m{1, 0, 0, 1};
    Point2 b;
    Point2 apply(Point2 p) const { return {m[0] * p.u + m[1] * p.v + b.u, m[2] * p.u + m[3] * p.v + b.v}; }
  };
  struct Tps {
    std::vector<Point2> ctrl;
    std::vector<Point2> w;
    std::array<Point2, 3> affine{};
  };

  Point2 deform(int t, Point2 r) const;
  double texture(Point2 r) const;
  void check(int t) const;

  SynthSpec spec_;
  std::vector<Affine> sim_;
  std::vector<Affine> sim_inv_;
  std::vector<Tps> tps_;
  std::vector<std::uint8_t> perm_;
  std::vector<Point2> ctrl_base_;
  std::vector<Point2> ctrl_vel_;
  Image file_texture_;
};

/// Whole-sequence convenience wrapper.
std::vector<SynthFrame> generate(const SynthSpec& spec);

/// Band-limited gradient noise in [0, 1], `octaves` halving periods.
double perlin(const std::vector<std::uint8_t>& perm, double x, double y, double period, int octaves);

}  // namespace adatrack
