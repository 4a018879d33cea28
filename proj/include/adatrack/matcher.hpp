#pragma once

#include "adatrack/features.hpp"
#include "adatrack/geometry.hpp"

namespace adatrack {

struct MatchResult {
  BBox bbox;
  /// Displacements of the top-left and bottom-right corners in px.
  Point2 corner_flow_tl;
  Point2 corner_flow_br;
  double confidence = 0.0;
  int iterations_run = 0;
};

struct MatchParams {
  int lookup_radius = 4;
  /// The box leaves init_box only when a first corner update reaches this
  /// many cells (one pixel).
  double min_move = 0.125;
  /// Later corner updates below this many cells are not applied; matching
  /// stops once neither corner moves.
  double stop_delta = 0.05;
};

/// Corner-parameterized template-to-ROI flow at relative template position
/// (s, t) in [0, 1]^2: u blends horizontally, v vertically.
Point2 interpolate_corner_flow(Point2 tl, Point2 br, double s, double t);

/// Anchor matching of a template feature map inside an ROI feature map.
/// `init_box` and the result are in ROI pixel coordinates (8 px per cell).
/// An empty `f_context` disables the context weighting.
MatchResult match_anchor(const FeatureMap& f_template, const FeatureMap& f_roi, const FeatureMap& f_context,
                         const BBox& init_box, int iters, const MatchParams& params = {});

}  // namespace adatrack
