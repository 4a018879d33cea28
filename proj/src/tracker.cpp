#include "adatrack/tracker.hpp"

#include <algorithm>
#include <cmath>

#include "adatrack/errors.hpp"

namespace adatrack {

std::string to_string(TrackMode m) {
  switch (m) {
    case TrackMode::InterFrameOnly:
      return "inter_frame_only";
    case TrackMode::TemplateOnly:
      return "template_only";
    case TrackMode::Full:
      return "full";
  }
  return "full";
}

TrackMode parse_mode(const std::string& s) {
  if (s == "inter_frame_only") return TrackMode::InterFrameOnly;
  if (s == "template_only") return TrackMode::TemplateOnly;
  if (s == "full") return TrackMode::Full;
  throw InputError("unknown mode: " + s);
}

void TrackerConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("alpha must be in [0, 1]");
  if (!(beta >= 0.0 && beta <= 1.0)) throw InputError("beta must be in [0, 1]");
  if (flow_iters < 1) throw InputError("flow_iters must be >= 1");
  if (match_iters < 1) throw InputError("match_iters must be >= 1");
  FeatureLayout{feature_channels}.validate();
  if (!(search_factor > 1.0)) throw InputError("search_factor must be > 1");
  if (!(roi_factor > 1.0)) throw InputError("roi_factor must be > 1");
}

std::vector<Point2> advection_grid(const BBox& region, int stride) {
  if (stride < 1) throw InputError("grid stride must be >= 1");
  std::vector<Point2> pts;
  for (double y = region.y; y < region.bottom(); y += stride)
    for (double x = region.x; x < region.right(); x += stride) pts.push_back({x, y});
  pts.push_back({region.x, region.y});
  pts.push_back({region.right(), region.y});
  pts.push_back({region.x, region.bottom()});
  pts.push_back({region.right(), region.bottom()});
  return pts;
}

BBox center_half(const BBox& roi) {
  return {roi.x + 0.25 * roi.w, roi.y + 0.25 * roi.h, 0.5 * roi.w, 0.5 * roi.h};
}

namespace {

/// ROI resampled so that a box with the initial aspect ratio and the area of
/// `scale_ref` spans the template size; the sampled region keeps the ROI center
/// and is rounded to whole cells.
PatchFrame roi_frame(const BBox& roi, const BBox& scale_ref, const BBox& b0) {
  const double zoom = std::sqrt(scale_ref.area() / b0.area());
  const double sx = kTemplateSize / (b0.w * zoom);
  const double sy = kTemplateSize / (b0.h * zoom);
  const int min_cells = kTemplateSize / kCellSize + 4;
  const int cw = std::max(min_cells, static_cast<int>(std::lround(roi.w * sx / kCellSize)));
  const int ch = std::max(min_cells, static_cast<int>(std::lround(roi.h * sy / kCellSize)));
  const int pw = cw * kCellSize, ph = ch * kCellSize;
  const Point2 c = roi.center();
  return {BBox::centered(c, pw / sx, ph / sy), pw, ph};
}

FeatureMap roi_features(const Image& gray, const PatchFrame& pf, int channels) {
  return encode(crop_resample(gray, pf.region, pf.width, pf.height), channels);
}

bool has_valid(const FlowField& g) {
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x)
      if (g.valid(x, y)) return true;
  return false;
}

BBox template_to_frame_scale(const BBox& b0) { return {b0.x, b0.y, b0.w / kTemplateSize, b0.h / kTemplateSize}; }

}  // namespace

TrackerState init(const Image& frame0, const BBox& b0, const TrackerConfig& config) {
  config.validate();
  if (!b0.valid() || b0.x < 0.0 || b0.y < 0.0 || b0.right() > frame0.width() || b0.bottom() > frame0.height()) {
    throw InputError("box outside frame");
  }
  if (b0.w < kMinBoxSide || b0.h < kMinBoxSide) throw InputError("box too small");
  TrackerState st;
  st.config = config;
  st.prev_frame = to_gray(frame0);
  st.tmpl = TemplateState::from_frame(st.prev_frame, b0, config.feature_channels);
  st.b0 = b0;
  st.prev_bbox = b0;
  const Size2 bounds{frame0.width(), frame0.height()};
  st.prev_roi = expand_box(b0, config.roi_factor, bounds);
  st.prev_features = roi_features(st.prev_frame, roi_frame(st.prev_roi, b0, b0), config.feature_channels);
  st.flow = std::make_shared<CorrelationFlow>(FlowParams{.feature_channels = config.feature_channels});
  st.status = TrackerStatus::Tracking;
  return st;
}

TrackResult step(TrackerState& st, const Image& frame) {
  if (st.status == TrackerStatus::Lost) throw InputError("tracker lost");
  if (frame.width() != st.prev_frame.width() || frame.height() != st.prev_frame.height()) {
    throw InputError("frame dimensions do not match the first frame");
  }
  const TrackerConfig& cfg = st.config;
  const Image cur = to_gray(frame);
  const Size2 bounds{cur.width(), cur.height()};
  TrackResult res;
  res.frame_index = ++st.frame_index;

  BBox roi;
  BBox box;
  FeatureMap f_u;
  bool need_match = true;

  const BBox region = expand_box(st.prev_bbox, cfg.search_factor, bounds);
  const PatchFrame pf{region, kWorkingSize, kWorkingSize};
  const Image p_prev = crop_resample(st.prev_frame, region, kWorkingSize, kWorkingSize);
  const Image p_cur = crop_resample(cur, region, kWorkingSize, kWorkingSize);
  if (!st.flow) st.flow = std::make_shared<CorrelationFlow>(FlowParams{.feature_channels = cfg.feature_channels});
  const BidirectionalFlow bf = st.flow->estimate(p_prev, p_cur, cfg.flow_iters);
  const FlowField& fwd = bf.forward.flow;
  const OcclusionMap occ = fb_occlusion(fwd, bf.backward.flow);
  const BBox prev_in_patch = pf.to_patch(st.prev_bbox);
  res.occlusion_fraction = occlusion_fraction(occ, prev_in_patch);
  if (res.occlusion_fraction > cfg.beta) {
    res.status = FrameStatus::Occluded;
    st.status = TrackerStatus::Occluded;
    return res;
  }

  auto occluded_at = [&](Point2 p) {
    const int x = std::clamp(static_cast<int>(std::floor(p.u)), 0, occ.width() - 1);
    const int y = std::clamp(static_cast<int>(std::floor(p.v)), 0, occ.height() - 1);
    return occ.at(x, y) != 0;
  };
  auto advect = [&](const BBox& r) {
    std::vector<Point2> kept, all;
    for (const Point2& q : advection_grid(r)) {
      const Point2 p = pf.to_patch(q);
      const Flow2 f = fwd.sample(p.u, p.v);
      const Point2 moved = pf.to_frame(Point2{p.u + f.u, p.v + f.v});
      all.push_back(moved);
      if (!occluded_at(p)) kept.push_back(moved);
    }
    return min_max_enclose(kept.empty() ? all : kept);
  };

  if (cfg.mode == TrackMode::InterFrameOnly) {
    roi = advect(expand_box(st.prev_bbox, cfg.roi_factor, bounds));
    box = advect(st.prev_bbox);
    need_match = false;
  } else {
    FeatureMap f_w = st.tmpl.f0;
    if (cfg.mode == TrackMode::TemplateOnly) {
      roi = expand_box(st.prev_bbox, cfg.roi_factor, bounds);
    } else {
      roi = advect(expand_box(st.prev_bbox, cfg.roi_factor, bounds));
      const BBox tmap = template_to_frame_scale(st.b0);
      const FlowField g = compose_flow_with(st.tmpl.g, [&](Point2 tp) -> std::optional<Flow2> {
        const Point2 q{tmap.x + tp.u * tmap.w, tmap.y + tp.v * tmap.h};
        const Point2 p = pf.to_patch(q);
        if (!fwd.inside(p.u, p.v) || occluded_at(p)) return std::nullopt;
        const Flow2 f = fwd.sample(p.u, p.v);
        return Flow2{static_cast<float>(f.u / pf.scale_x() / tmap.w), static_cast<float>(f.v / pf.scale_y() / tmap.h)};
      });
      st.tmpl.g = g;
      const bool any_valid = has_valid(g);
      st.tmpl.scale = any_valid ? scale_ratio(g, st.tmpl.center) : 1.0;
      if (any_valid) f_w = encode(warp_template(st.tmpl), cfg.feature_channels);
    }
    const Image prev_crop = crop_resample(p_prev, prev_in_patch, kTemplateSize, kTemplateSize);
    const FeatureMap f_prev = encode(prev_crop, cfg.feature_channels);
    const ConfidenceMap u = sample_cells(bf.forward.confidence, prev_in_patch, f_prev.width(), f_prev.height());
    const OcclusionMap o = sample_cells(occ, prev_in_patch, f_prev.width(), f_prev.height());
    f_u = fuse_features(f_w, f_prev, u, o, cfg.alpha);
  }

  FeatureMap f_roi;
  if (need_match) {
    const PatchFrame rf = roi_frame(roi, st.prev_bbox, st.b0);
    f_roi = roi_features(cur, rf, cfg.feature_channels);
    const BBox init_box{0.25 * rf.width, 0.25 * rf.height, 0.5 * rf.width, 0.5 * rf.height};
    const MatchResult m = match_anchor(f_u, f_roi, st.prev_features, init_box, cfg.match_iters);
    res.match_confidence = m.confidence;
    box = rf.to_frame(m.bbox);
  }

  const Point2 c = box.center();
  const bool outside = c.u < 0.0 || c.v < 0.0 || c.u >= bounds.width || c.v >= bounds.height;
  st.frames_outside = outside ? st.frames_outside + 1 : 0;

  const double x0 = std::max(0.0, box.x), y0 = std::max(0.0, box.y);
  const double x1 = std::min<double>(bounds.width, box.right()), y1 = std::min<double>(bounds.height, box.bottom());
  BBox clipped = st.prev_bbox;
  if (x1 - x0 >= 1.0 && y1 - y0 >= 1.0) clipped = {x0, y0, x1 - x0, y1 - y0};

  res.status = FrameStatus::Tracked;
  res.bbox = clipped;
  st.prev_bbox = clipped;
  st.prev_roi = roi;
  st.prev_frame = cur;
  if (need_match) {
    st.prev_features = std::move(f_roi);
  }
  st.status = st.frames_outside >= kLostAfter ? TrackerStatus::Lost : TrackerStatus::Tracking;
  return res;
}

std::vector<TrackResult> track_sequence(int frame_count, const std::function<Image(int)>& frames, const BBox& b0,
                                        const TrackerConfig& config) {
  if (frame_count < 2) throw InputError("need at least 2 frames");
  TrackerState st = init(frames(0), b0, config);
  std::vector<TrackResult> out;
  out.reserve(frame_count - 1);
  for (int t = 1; t < frame_count; ++t) out.push_back(step(st, frames(t)));
  return out;
}

std::vector<TrackResult> track_sequence(const std::vector<Image>& frames, const BBox& b0,
                                        const TrackerConfig& config) {
  return track_sequence(static_cast<int>(frames.size()), [&](int t) { return frames[t]; }, b0, config);
}

}  // namespace adatrack
