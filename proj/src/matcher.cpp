#include "adatrack/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "adatrack/errors.hpp"
#include "adatrack/flow.hpp"

namespace adatrack {

Point2 interpolate_corner_flow(Point2 tl, Point2 br, double s, double t) {
  return {(1.0 - s) * tl.u + s * br.u, (1.0 - t) * tl.v + t * br.v};
}

namespace {

bool all_zero(const FeatureMap& f) {
  return std::all_of(f.data().begin(), f.data().end(), [](float v) { return v == 0.0f; });
}

/// Bilinear correlation of template cell (i, j) at fractional ROI cell
/// position (k, l). Positions outside the ROI score zero.
double lookup(const CostVolume& cv, int i, int j, double k, double l) {
  const int rw = cv.dst_width(), rh = cv.dst_height();
  if (k < 0.0 || l < 0.0 || k > rw - 1 || l > rh - 1) return 0.0;
  const int k0 = std::min(static_cast<int>(k), rw - 1), l0 = std::min(static_cast<int>(l), rh - 1);
  const int k1 = std::min(k0 + 1, rw - 1), l1 = std::min(l0 + 1, rh - 1);
  const double ak = k - k0, al = l - l0;
  return (1 - al) * ((1 - ak) * cv.at(i, j, k0, l0) + ak * cv.at(i, j, k1, l0)) +
         al * ((1 - ak) * cv.at(i, j, k0, l1) + ak * cv.at(i, j, k1, l1));
}

/// Sub-step offset of a 1-D peak from three samples, in [-0.5, 0.5].
double parabolic_offset(double a, double b, double c) {
  const double den = a - 2.0 * b + c;
  if (!(den < 0.0)) return 0.0;
  return std::clamp(0.5 * (a - c) / den, -0.5, 0.5);
}

/// Template cells whose appearance disagrees with the previous-frame context
/// at the same relative spot carry half weight.
std::vector<double> context_weights(const FeatureMap& t, const FeatureMap& ctx) {
  std::vector<double> w(static_cast<std::size_t>(t.width()) * t.height(), 1.0);
  if (ctx.empty() || ctx.channels() != t.channels()) return w;
  // The template maps onto the central half-size region of the context.
  std::vector<double> sim(w.size());
  for (int j = 0; j < t.height(); ++j)
    for (int i = 0; i < t.width(); ++i) {
      const double cx = 0.25 * ctx.width() + (i + 0.5) * 0.5 * ctx.width() / t.width();
      const double cy = 0.25 * ctx.height() + (j + 0.5) * 0.5 * ctx.height() / t.height();
      const int k = std::clamp(static_cast<int>(cx), 0, ctx.width() - 1);
      const int l = std::clamp(static_cast<int>(cy), 0, ctx.height() - 1);
      sim[static_cast<std::size_t>(j) * t.width() + i] = cell_dot(t.cell(i, j), ctx.cell(k, l));
    }
  std::vector<double> sorted = sim;
  const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  for (std::size_t n = 0; n < w.size(); ++n) {
    if (sim[n] < *mid) w[n] = 0.5;
  }
  return w;
}

}  // namespace

MatchResult match_anchor(const FeatureMap& f_template, const FeatureMap& f_roi, const FeatureMap& f_context,
                         const BBox& init_box, int iters, const MatchParams& params) {
  if (iters < 1) throw InputError("match iterations must be >= 1");
  if (f_template.width() > f_roi.width() || f_template.height() > f_roi.height()) {
    throw InputError("template exceeds search region");
  }
  if (!init_box.valid()) throw InputError("invalid init box");

  MatchResult res;
  res.bbox = init_box;
  if (all_zero(f_roi) || all_zero(f_template)) return res;

  const CostVolume cv = build_cost_volume(f_template, f_roi, 1);
  const int tw = f_template.width(), th = f_template.height();
  const double cs = kCellSize;
  const std::vector<double> ctx_w = context_weights(f_template, f_context);

  // Cell (i, j) of the template sits at relative position (s_i, t_j) inside
  // init_box; base positions are ROI cell indices.
  std::vector<double> s(tw), t(th), base_k(tw), base_l(th);
  for (int i = 0; i < tw; ++i) {
    s[i] = (i + 0.5) / tw;
    base_k[i] = (init_box.x + s[i] * init_box.w) / cs - 0.5;
  }
  for (int j = 0; j < th; ++j) {
    t[j] = (j + 0.5) / th;
    base_l[j] = (init_box.y + t[j] * init_box.h) / cs - 0.5;
  }

  Point2 tl{0.0, 0.0}, br{0.0, 0.0};  // in cells
  const int r = params.lookup_radius;
  const int side = 2 * r + 1;
  std::vector<double> score_tl(static_cast<std::size_t>(side) * side);
  std::vector<double> score_br(score_tl.size());

  auto corner_step = [&](const std::vector<double>& sc) {
    int best = 0;
    for (int n = 1; n < static_cast<int>(sc.size()); ++n)
      if (sc[n] > sc[best]) best = n;
    // Prefer staying put on ties.
    const int center = r * side + r;
    if (sc[center] >= sc[best]) best = center;
    const int bx = best % side, by = best / side;
    const auto at = [&](int x, int y) { return sc[static_cast<std::size_t>(y) * side + x]; };
    const double ou = (bx > 0 && bx < side - 1) ? parabolic_offset(at(bx - 1, by), at(bx, by), at(bx + 1, by)) : 0.0;
    const double ov = (by > 0 && by < side - 1) ? parabolic_offset(at(bx, by - 1), at(bx, by), at(bx, by + 1)) : 0.0;
    return Point2{bx - r + ou, by - r + ov};
  };

  for (int it = 0; it < iters; ++it) {
    std::fill(score_tl.begin(), score_tl.end(), 0.0);
    std::fill(score_br.begin(), score_br.end(), 0.0);
    for (int j = 0; j < th; ++j)
      for (int i = 0; i < tw; ++i) {
        const Point2 f = interpolate_corner_flow(tl, br, s[i], t[j]);
        const double k = base_k[i] + f.u, l = base_l[j] + f.v;
        const double cw = ctx_w[static_cast<std::size_t>(j) * tw + i];
        const double wtl = (1 - s[i]) * (1 - t[j]) * cw;
        const double wbr = s[i] * t[j] * cw;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const std::size_t n = static_cast<std::size_t>(dy + r) * side + (dx + r);
            score_tl[n] += wtl * lookup(cv, i, j, k + (1 - s[i]) * dx, l + (1 - t[j]) * dy);
            score_br[n] += wbr * lookup(cv, i, j, k + s[i] * dx, l + t[j] * dy);
          }
      }
    // Sub-threshold updates are dropped: the sub-cell fit of an asymmetric
    // peak is biased, and applying it would creep on static content.
    const double threshold = it == 0 ? params.min_move : params.stop_delta;
    auto settle = [&](Point2 d) {
      return std::max(std::abs(d.u), std::abs(d.v)) < threshold ? Point2{0.0, 0.0} : d;
    };
    const Point2 d_tl = settle(corner_step(score_tl));
    const Point2 d_br = settle(corner_step(score_br));
    res.iterations_run = it + 1;
    if (d_tl == Point2{0.0, 0.0} && d_br == Point2{0.0, 0.0}) break;
    const Point2 ntl = tl + d_tl, nbr = br + d_br;
    // A step that would fold the box below one cell is rejected.
    if (init_box.w / cs + nbr.u - ntl.u < 1.0 || init_box.h / cs + nbr.v - ntl.v < 1.0) break;
    tl = ntl;
    br = nbr;
  }

  double conf = 0.0;
  for (int j = 0; j < th; ++j)
    for (int i = 0; i < tw; ++i) {
      const Point2 f = interpolate_corner_flow(tl, br, s[i], t[j]);
      conf += std::clamp(lookup(cv, i, j, base_k[i] + f.u, base_l[j] + f.v), 0.0, 1.0);
    }
  res.confidence = conf / (tw * th);
  res.corner_flow_tl = {tl.u * cs, tl.v * cs};
  res.corner_flow_br = {br.u * cs, br.v * cs};
  const double x0 = init_box.x + res.corner_flow_tl.u, y0 = init_box.y + res.corner_flow_tl.v;
  const double x1 = init_box.right() + res.corner_flow_br.u, y1 = init_box.bottom() + res.corner_flow_br.v;
  if (x1 - x0 < 1.0 || y1 - y0 < 1.0) {
    throw InvariantViolation("matched box collapsed");
  }
  res.bbox = {x0, y0, x1 - x0, y1 - y0};
  return res;
}

}  // namespace adatrack
