#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "adatrack/errors.hpp"
#include "adatrack/features.hpp"
#include "adatrack/geometry.hpp"

namespace adatrack {

/// Row-major scalar grid.
template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{}) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) throw InputError("grid dimensions must be positive");
    data_.assign(static_cast<std::size_t>(width) * height, fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  Size2 size() const { return {width_, height_}; }
  bool empty() const { return data_.empty(); }
  T& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// Per-pixel reliability in [0, 1].
using ConfidenceMap = Grid<float>;
/// Per-pixel occlusion flag (1 = occluded).
using OcclusionMap = Grid<std::uint8_t>;

struct Flow2 {
  float u = 0.0f;
  float v = 0.0f;
  friend bool operator==(const Flow2&, const Flow2&) = default;
};

/// Dense displacement field in px (u rightward, v downward). The vector at
/// pixel (i, j) moves the point at that pixel's center.
class FlowField {
 public:
  FlowField() = default;
  FlowField(int width, int height, Flow2 fill = {});

  int width() const { return vec_.width(); }
  int height() const { return vec_.height(); }
  Size2 size() const { return vec_.size(); }
  bool empty() const { return vec_.empty(); }

  Flow2& at(int x, int y) { return vec_.at(x, y); }
  const Flow2& at(int x, int y) const { return vec_.at(x, y); }
  bool valid(int x, int y) const { return valid_.at(x, y) != 0; }
  void set_valid(int x, int y, bool v) { valid_.at(x, y) = v ? 1 : 0; }

  /// Bilinear lookup at continuous coordinates (border replication).
  Flow2 sample(double x, double y) const;
  /// Whether (x, y) lies inside the field's continuous extent [0, W) x [0, H).
  bool inside(double x, double y) const { return x >= 0.0 && y >= 0.0 && x < width() && y < height(); }

  friend bool operator==(const FlowField&, const FlowField&) = default;

 private:
  Grid<Flow2> vec_;
  Grid<std::uint8_t> valid_;
};

/// All-pairs correlation between source and target cells, with target-side
/// 2x2 average pooling per level.
class CostVolume {
 public:
  CostVolume() = default;

  int src_width() const { return sw_; }
  int src_height() const { return sh_; }
  int levels() const { return static_cast<int>(levels_.size()); }
  int dst_width(int level = 0) const { return dims_[level].width; }
  int dst_height(int level = 0) const { return dims_[level].height; }

  /// Entry (i, j, k, l): source cell (i, j) against target cell (k, l).
  float at(int i, int j, int k, int l, int level = 0) const {
    const Size2 d = dims_[level];
    return levels_[level][((static_cast<std::size_t>(j) * sw_ + i) * d.height + l) * d.width + k];
  }

  friend CostVolume build_cost_volume(const FeatureMap& src, const FeatureMap& dst, int levels);

 private:
  int sw_ = 0;
  int sh_ = 0;
  std::vector<Size2> dims_;
  std::vector<std::vector<float>> levels_;
};

/// Throws InputError on channel mismatch or levels < 1.
CostVolume build_cost_volume(const FeatureMap& src, const FeatureMap& dst, int levels);

struct FlowParams {
  int pyramid_levels = 3;
  int lookup_radius = 4;
  /// Soft-argmax temperature over correlation scores.
  double softmax_temperature = 0.05;
  /// A cell only moves when the neighborhood peak beats its current score by this much.
  double min_move_gain = 0.1;
  int refine_iters = 6;
  int refine_radius = 7;
  /// Confidence falloff of the forward-backward residual, px.
  double sigma_c = 1.5;
  /// Best-minus-runner-up correlation gap that maps to full peak confidence.
  double peak_margin = 0.25;
  int ncc_radius = 4;
  double ncc_min = 0.5;
  /// Windows with standard deviation below this are treated as textureless.
  double flat_std = 0.02;
  int feature_channels = 32;
};

struct FlowEstimate {
  FlowField flow;
  ConfidenceMap confidence;
};

struct BidirectionalFlow {
  FlowEstimate forward;
  FlowEstimate backward;
};

/// Pluggable dense flow backend. Implementations must return forward
/// (src -> dst) and backward (dst -> src) fields at pixel resolution with
/// confidences in [0, 1].
class FlowEstimator {
 public:
  virtual ~FlowEstimator() = default;
  virtual BidirectionalFlow estimate(const Image& src, const Image& dst, int iters) const = 0;
};

/// Coarse-to-fine correlation-volume lookup with windowed photometric
/// refinement. Deterministic and single-threaded.
class CorrelationFlow final : public FlowEstimator {
 public:
  explicit CorrelationFlow(FlowParams params = {}) : params_(params) {}
  BidirectionalFlow estimate(const Image& src, const Image& dst, int iters) const override;
  const FlowParams& params() const { return params_; }

 private:
  FlowParams params_;
};

/// Forward flow and confidence from the built-in backend.
FlowEstimate estimate_flow(const Image& src, const Image& dst, int iters, const FlowParams& params = {});

/// G(x) = g_prev(x) + lookup(x + g_prev(x)); `lookup` returns nullopt when the
/// position falls outside its domain, which marks the output invalid.
template <class Lookup>
FlowField compose_flow_with(const FlowField& g_prev, Lookup&& lookup) {
  FlowField out(g_prev.width(), g_prev.height());
  for (int y = 0; y < g_prev.height(); ++y) {
    for (int x = 0; x < g_prev.width(); ++x) {
      const Flow2 g = g_prev.at(x, y);
      const std::optional<Flow2> d = lookup(Point2{x + 0.5 + g.u, y + 0.5 + g.v});
      if (d) {
        out.at(x, y) = {g.u + d->u, g.v + d->v};
        out.set_valid(x, y, g_prev.valid(x, y));
      } else {
        out.at(x, y) = g;
        out.set_valid(x, y, false);
      }
    }
  }
  return out;
}

/// Accumulates `v` after `g_prev` with bilinear lookup of `v`.
FlowField compose_flow(const FlowField& g_prev, const FlowField& v);

struct ConsistencyParams {
  double a = 0.01;
  double b = 0.5;
};

/// Forward-backward consistency occlusion map on the forward field's grid.
/// Pixels whose forward target leaves the frame, or whose forward vector is
/// flagged invalid, are occluded.
OcclusionMap fb_occlusion(const FlowField& fwd, const FlowField& bwd, ConsistencyParams params = {});

/// Fraction of pixels with centers inside `b` flagged occluded.
double occlusion_fraction(const OcclusionMap& o, const BBox& b);

}  // namespace adatrack
