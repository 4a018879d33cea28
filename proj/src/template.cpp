#include "adatrack/template.hpp"

#include <algorithm>
#include <cmath>

#include "adatrack/errors.hpp"

namespace adatrack {

namespace {

struct Centroid {
  Point2 c_y;
  int count = 0;
};

Centroid moved_centroid(const FlowField& g, Point2 center) {
  double su = 0.0, sv = 0.0;
  int n = 0;
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) {
      if (!g.valid(x, y)) continue;
      su += g.at(x, y).u;
      sv += g.at(x, y).v;
      ++n;
    }
  if (n == 0) return {center, 0};
  return {{center.u + su / n, center.v + sv / n}, n};
}

}  // namespace

TemplateState TemplateState::from_frame(const Image& frame, const BBox& b0, int channels) {
  TemplateState s;
  s.p0 = to_gray(crop_resample(frame, b0, kTemplateSize, kTemplateSize));
  s.f0 = encode(s.p0, channels);
  s.g = FlowField(kTemplateSize, kTemplateSize);
  s.center = {0.5 * kTemplateSize, 0.5 * kTemplateSize};
  s.scale = 1.0;
  return s;
}

double scale_ratio(const FlowField& g, Point2 center) {
  if (g.empty()) throw InputError("empty flow field");
  const Point2 c_y = moved_centroid(g, center).c_y;
  double acc = 0.0;
  int n = 0;
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) {
      if (!g.valid(x, y)) continue;
      const Point2 x0{x + 0.5, y + 0.5};
      const double r0 = std::hypot(x0.u - center.u, x0.v - center.v);
      if (r0 < 1e-9) continue;
      const Flow2 d = g.at(x, y);
      acc += std::hypot(x0.u + d.u - c_y.u, x0.v + d.v - c_y.v) / r0;
      ++n;
    }
  if (n == 0) throw InputError("degenerate grid");
  return acc / n;
}

Image warp_template(const TemplateState& state) {
  const FlowField& g = state.g;
  if (g.width() != state.p0.width() || g.height() != state.p0.height()) {
    throw InputError("accumulated flow does not match the template grid");
  }
  if (!(state.scale > 0.0)) throw InputError("template scale must be positive");
  const Point2 c0 = state.center;
  const Point2 c_y = moved_centroid(g, c0).c_y;
  Image out(state.p0.width(), state.p0.height(), state.p0.channels());
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) {
      const double px = x + 0.5, py = y + 0.5;
      double ru = 0.0, rv = 0.0;
      if (g.valid(x, y)) {
        const Flow2 d = g.at(x, y);
        ru = (px + d.u - c_y.u) / state.scale - (px - c0.u);
        rv = (py + d.v - c_y.v) / state.scale - (py - c0.v);
      }
      for (int c = 0; c < out.channels(); ++c) {
        // Zero residual reads the stored sample directly, keeping identity exact.
        out.at(x, y, c) = (ru == 0.0 && rv == 0.0) ? state.p0.at(x, y, c)
                                                   : sample_bilinear(state.p0, px - ru, py - rv, c);
      }
    }
  return out;
}

ConfidenceMap sample_cells(const ConfidenceMap& u, const BBox& region, int w, int h) {
  ConfidenceMap out(w, h);
  const double sx = region.w / w, sy = region.h / h;
  for (int j = 0; j < h; ++j)
    for (int i = 0; i < w; ++i) {
      const double fx = std::clamp(region.x + (i + 0.5) * sx - 0.5, 0.0, u.width() - 1.0);
      const double fy = std::clamp(region.y + (j + 0.5) * sy - 0.5, 0.0, u.height() - 1.0);
      const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
      const int x1 = std::min(x0 + 1, u.width() - 1), y1 = std::min(y0 + 1, u.height() - 1);
      const double ax = fx - x0, ay = fy - y0;
      out.at(i, j) = static_cast<float>((1 - ay) * ((1 - ax) * u.at(x0, y0) + ax * u.at(x1, y0)) +
                                        ay * ((1 - ax) * u.at(x0, y1) + ax * u.at(x1, y1)));
    }
  return out;
}

OcclusionMap sample_cells(const OcclusionMap& o, const BBox& region, int w, int h) {
  OcclusionMap out(w, h);
  const double sx = region.w / w, sy = region.h / h;
  for (int j = 0; j < h; ++j)
    for (int i = 0; i < w; ++i) {
      const int x = std::clamp(static_cast<int>(std::floor(region.x + (i + 0.5) * sx)), 0, o.width() - 1);
      const int y = std::clamp(static_cast<int>(std::floor(region.y + (j + 0.5) * sy)), 0, o.height() - 1);
      out.at(i, j) = o.at(x, y);
    }
  return out;
}

FeatureMap fuse_features_raw(const FeatureMap& f_warped, const FeatureMap& f_prev_roi, const ConfidenceMap& u,
                             const OcclusionMap& o, double alpha) {
  const int w = f_warped.width(), h = f_warped.height();
  if (f_prev_roi.width() != w || f_prev_roi.height() != h || f_prev_roi.channels() != f_warped.channels() ||
      u.width() != w || u.height() != h || o.width() != w || o.height() != h) {
    throw InputError("fusion extent mismatch");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("alpha must be in [0, 1]");
  FeatureMap out(w, h, f_warped.channels());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gate = o.at(x, y) ? 0.0 : static_cast<double>(u.at(x, y));
      const auto a = f_warped.cell(x, y);
      const auto b = f_prev_roi.cell(x, y);
      auto c = out.cell(x, y);
      for (std::size_t k = 0; k < c.size(); ++k) {
        c[k] = static_cast<float>(alpha * a[k] + (1.0 - alpha) * gate * b[k]);
      }
    }
  return out;
}

FeatureMap fuse_features(const FeatureMap& f_warped, const FeatureMap& f_prev_roi, const ConfidenceMap& u,
                         const OcclusionMap& o, double alpha) {
  FeatureMap out = fuse_features_raw(f_warped, f_prev_roi, u, o, alpha);
  normalize_cells(out);
  return out;
}

}  // namespace adatrack
