#include "adatrack/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "adatrack/errors.hpp"
#include "adatrack/template.hpp"

namespace adatrack {

double expected_average_overlap(const std::vector<double>& ious, const std::vector<bool>& scored) {
  const int n = static_cast<int>(ious.size());
  if (n == 0) return 0.0;
  const std::array<int, 3> anchors{0, n / 4, n / 2};
  double acc = 0.0;
  for (const int a : anchors) {
    double sum = 0.0;
    int count = 0;
    bool failed = false;
    for (int t = a; t < n; ++t) {
      if (!scored[t]) continue;
      if (ious[t] <= 0.0) failed = true;
      if (!failed) sum += ious[t];
      ++count;
    }
    acc += count > 0 ? sum / count : 0.0;
  }
  return acc / anchors.size();
}

Metrics2D metric_suite(const std::vector<TrackResult>& pred, const std::vector<GtEntry>& gt,
                       const MetricParams& params) {
  if (pred.size() != gt.size()) throw InputError("prediction and ground truth lengths differ");
  Metrics2D m;
  const std::size_t n = pred.size();
  std::vector<double> frame_iou(n, 0.0);
  std::vector<bool> scored(n, false);
  int visible = 0, successes = 0;
  double iou_sum = 0.0;
  std::vector<double> errs;
  for (std::size_t t = 0; t < n; ++t) {
    if (!gt[t].visible) continue;
    scored[t] = true;
    ++visible;
    if (pred[t].status != FrameStatus::Tracked || !pred[t].bbox) continue;
    const double o = iou(*pred[t].bbox, gt[t].box);
    if (o <= params.success_iou) continue;
    frame_iou[t] = o;
    ++successes;
    iou_sum += o;
    const Point2 d = pred[t].bbox->center() - gt[t].box.center();
    errs.push_back(std::hypot(d.u, d.v));
  }
  if (visible > 0) m.rob2d = static_cast<double>(successes) / visible;
  if (successes > 0) {
    m.acc2d = iou_sum / successes;
    double s = 0.0;
    for (double e : errs) s += e;
    m.err2d_mean = s / errs.size();
    double v = 0.0;
    for (double e : errs) v += (e - m.err2d_mean) * (e - m.err2d_mean);
    m.err2d_std = std::sqrt(v / errs.size());
  }
  m.eao = expected_average_overlap(frame_iou, scored);
  return m;
}

double corner_l1(const BBox& a, const BBox& ref) {
  return 0.25 * (std::abs(a.x - ref.x) / ref.w + std::abs(a.y - ref.y) / ref.h +
                 std::abs(a.right() - ref.right()) / ref.w + std::abs(a.bottom() - ref.bottom()) / ref.h);
}

CycleResult cycle_check(const Image& prev, const Image& cur, const Image& next, const BBox& b,
                        const TrackerConfig& config) {
  TrackerState fw = init(prev, b, config);
  step(fw, cur);
  step(fw, next);
  TrackerState bw = init(next, fw.prev_bbox, config);
  step(bw, cur);
  step(bw, prev);
  CycleResult r;
  r.b_cycle = bw.prev_bbox;
  r.giou_term = 1.0 - giou(r.b_cycle, b);
  r.l1_term = corner_l1(r.b_cycle, b);
  const Image g = to_gray(prev);
  const Image pc = crop_resample(g, r.b_cycle, kTemplateSize, kTemplateSize);
  const Image p = crop_resample(g, b, kTemplateSize, kTemplateSize);
  double s = 0.0;
  for (std::size_t k = 0; k < p.data().size(); ++k) s += std::abs(pc.data()[k] - p.data()[k]);
  r.recon_term = s / p.data().size();
  return r;
}

double charbonnier(double d, double eps) {
  // Equal to sqrt(d^2 + eps^2) - eps, written so that d = 0 gives exactly 0.
  return d * d / (std::sqrt(d * d + eps * eps) + eps);
}

double total_loss(double l_cycle, double l_aug, double l_photo, double l_smooth, const LossWeights& w) {
  return w.cycle * l_cycle + w.aug * l_aug + w.photo * l_photo + w.smooth * l_smooth;
}

double photometric_loss(const FlowField& flow, const OcclusionMap& occ, const Image& i0, const Image& i1) {
  if (flow.width() != i0.width() || flow.height() != i0.height() || i1.width() != i0.width() ||
      i1.height() != i0.height() || occ.width() != i0.width() || occ.height() != i0.height()) {
    throw InputError("loss input extent mismatch");
  }
  const Image g0 = to_gray(i0), g1 = to_gray(i1);
  double s = 0.0;
  long n = 0;
  for (int y = 0; y < g0.height(); ++y)
    for (int x = 0; x < g0.width(); ++x) {
      if (occ.at(x, y)) continue;
      const Flow2 f = flow.at(x, y);
      s += charbonnier(std::abs(g0.at(x, y) - sample_bilinear(g1, x + 0.5 + f.u, y + 0.5 + f.v)));
      ++n;
    }
  return n > 0 ? s / n : 0.0;
}

double smoothness_loss(const FlowField& flow, const Image& i0) {
  if (flow.width() != i0.width() || flow.height() != i0.height()) throw InputError("loss input extent mismatch");
  const Image g = to_gray(i0);
  const int W = g.width(), H = g.height();
  double s = 0.0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int xn = std::min(x + 1, W - 1), yn = std::min(y + 1, H - 1);
      const double gx = g.at(xn, y) - g.at(x, y), gy = g.at(x, yn) - g.at(x, y);
      const Flow2 f = flow.at(x, y), fx = flow.at(xn, y), fy = flow.at(x, yn);
      const double grad = std::abs(fx.u - f.u) + std::abs(fx.v - f.v) + std::abs(fy.u - f.u) + std::abs(fy.v - f.v);
      s += std::exp(-10.0 * std::hypot(gx, gy)) * grad;
    }
  return s / (static_cast<double>(W) * H);
}

double augmentation_loss(const BBox& pred, const BBox& pseudo_gt) {
  return (1.0 - giou(pred, pseudo_gt)) + corner_l1(pred, pseudo_gt);
}

LossReport diagnostic_losses(const LossInputs& in) {
  LossReport r;
  r.giou_term = in.cycle.giou_term;
  r.l1_term = in.cycle.l1_term;
  r.recon_term = in.cycle.recon_term;
  r.l_cycle = r.giou_term + r.l1_term + r.recon_term;
  r.l_photo = photometric_loss(in.flow, in.occ, in.i0, in.i1);
  r.l_smooth = smoothness_loss(in.flow, in.i0);
  r.l_aug = augmentation_loss(in.aug_pred, in.aug_gt);
  r.total = total_loss(r.l_cycle, r.l_aug, r.l_photo, r.l_smooth, in.weights);
  return r;
}

std::string format_metrics(const std::string& name, const Metrics2D& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,acc2d=%.3f,rob2d=%.3f,err2d_mean=%.3f,err2d_std=%.3f,eao=%.3f", name.c_str(),
                m.acc2d, m.rob2d, m.err2d_mean, m.err2d_std, m.eao);
  return buf;
}

Metrics2D mean_metrics(const std::vector<Metrics2D>& ms) {
  Metrics2D out;
  if (ms.empty()) return out;
  for (const Metrics2D& m : ms) {
    out.acc2d += m.acc2d;
    out.rob2d += m.rob2d;
    out.err2d_mean += m.err2d_mean;
    out.err2d_std += m.err2d_std;
    out.eao += m.eao;
  }
  const double n = static_cast<double>(ms.size());
  out.acc2d /= n;
  out.rob2d /= n;
  out.err2d_mean /= n;
  out.err2d_std /= n;
  out.eao /= n;
  return out;
}

}  // namespace adatrack
