#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "adatrack/features.hpp"
#include "adatrack/flow.hpp"
#include "adatrack/geometry.hpp"
#include "adatrack/matcher.hpp"
#include "adatrack/template.hpp"

namespace adatrack {

enum class TrackMode { InterFrameOnly, TemplateOnly, Full };

/// "inter_frame_only", "template_only", "full".
std::string to_string(TrackMode m);
/// Throws InputError on unknown names.
TrackMode parse_mode(const std::string& s);

struct TrackerConfig {
  double alpha = 0.5;
  double beta = 0.5;
  int flow_iters = 4;
  int match_iters = 8;
  int feature_channels = 32;
  TrackMode mode = TrackMode::Full;
  double search_factor = 4.0;
  double roi_factor = 2.0;

  /// Throws InputError when a field is out of range.
  void validate() const;
};

enum class TrackerStatus { Tracking, Occluded, Lost };
enum class FrameStatus { Tracked, Occluded };

struct TrackerState {
  TrackerConfig config;
  TemplateState tmpl;
  BBox b0;
  BBox prev_bbox;
  BBox prev_roi;
  /// Grayscale copy of the last frame that produced a box.
  Image prev_frame;
  /// ROI features of that frame, reused as matching context.
  FeatureMap prev_features;
  std::shared_ptr<const FlowEstimator> flow;
  int frame_index = 0;
  int frames_outside = 0;
  TrackerStatus status = TrackerStatus::Tracking;
};

struct TrackResult {
  int frame_index = 0;
  std::optional<BBox> bbox;
  FrameStatus status = FrameStatus::Tracked;
  double occlusion_fraction = 0.0;
  double match_confidence = 0.0;
};

/// Side length of the resampled search patch.
inline constexpr int kWorkingSize = 256;
/// Smallest accepted initial box side, px.
inline constexpr double kMinBoxSide = 16.0;
/// Consecutive frames with the box center off-frame before the tracker is lost.
inline constexpr int kLostAfter = 10;

/// Throws InputError("box outside frame") / ("box too small").
TrackerState init(const Image& frame0, const BBox& b0, const TrackerConfig& config);

/// Advances the tracker by one frame. Throws InputError on a size mismatch or
/// when the tracker is already lost.
TrackResult step(TrackerState& state, const Image& frame);

/// Runs init on frames[0] and step on the rest. `frames` is pulled lazily.
std::vector<TrackResult> track_sequence(int frame_count, const std::function<Image(int)>& frames, const BBox& b0,
                                        const TrackerConfig& config);
std::vector<TrackResult> track_sequence(const std::vector<Image>& frames, const BBox& b0,
                                        const TrackerConfig& config);

/// Min-Max advection lattice of a region: every `stride`-th px plus the four
/// corners.
std::vector<Point2> advection_grid(const BBox& region, int stride = 4);

/// Center half-size box of `roi`.
BBox center_half(const BBox& roi);

}  // namespace adatrack
