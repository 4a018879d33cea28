#pragma once

#include "adatrack/features.hpp"
#include "adatrack/flow.hpp"
#include "adatrack/geometry.hpp"

namespace adatrack {

/// Side length of the template patch in px (8 x 8 feature cells).
inline constexpr int kTemplateSize = 64;

/// Original template patch plus the accumulated flow that tracks its surface.
/// `g` lives on the template's pixel grid, in template px.
struct TemplateState {
  Image p0;
  FeatureMap f0;
  FlowField g;
  Point2 center;
  double scale = 1.0;

  /// Crops `b0` from `frame`, resamples to kTemplateSize and encodes it.
  static TemplateState from_frame(const Image& frame, const BBox& b0, int channels = 32);
};

/// Mean radial expansion of the valid grid points about their own centroid,
/// relative to their original distance from `center`. Throws
/// InputError("degenerate grid") when no valid point is off-center.
double scale_ratio(const FlowField& g, Point2 center);

/// Pull-back of p0 along the accumulated flow with its translation and
/// isotropic zoom removed. Invalid flow points sample p0 in place.
Image warp_template(const TemplateState& state);

/// Bilinear resample of a per-pixel map over `region` onto a w x h grid of
/// cell centers.
ConfidenceMap sample_cells(const ConfidenceMap& u, const BBox& region, int w, int h);
/// Nearest-neighbor counterpart of sample_cells for occlusion flags.
OcclusionMap sample_cells(const OcclusionMap& o, const BBox& region, int w, int h);

/// alpha * f_warped + (1 - alpha) * u * (1 - o) * f_prev_roi, without the
/// final per-cell normalization.
FeatureMap fuse_features_raw(const FeatureMap& f_warped, const FeatureMap& f_prev_roi, const ConfidenceMap& u,
                             const OcclusionMap& o, double alpha);

/// fuse_features_raw followed by per-cell L2 normalization.
FeatureMap fuse_features(const FeatureMap& f_warped, const FeatureMap& f_prev_roi, const ConfidenceMap& u,
                         const OcclusionMap& o, double alpha);

}  // namespace adatrack
