#pragma once

#include <array>
#include <string>
#include <vector>

#include "adatrack/flow.hpp"
#include "adatrack/geometry.hpp"
#include "adatrack/tracker.hpp"

namespace adatrack {

struct GtEntry {
  BBox box;
  bool visible = true;
};

struct Metrics2D {
  double acc2d = 0.0;
  double rob2d = 0.0;
  double err2d_mean = 0.0;
  double err2d_std = 0.0;
  double eao = 0.0;
};

struct MetricParams {
  /// A visible frame counts as a success when the tracker reports a box with
  /// IoU strictly above this.
  double success_iou = 0.0;
};

/// Scores aligned prediction / ground-truth lists. Invisible GT frames are
/// skipped. Throws InputError on a length mismatch.
Metrics2D metric_suite(const std::vector<TrackResult>& pred, const std::vector<GtEntry>& gt,
                       const MetricParams& params = {});

/// Anchor-averaged overlap from per-frame IoUs (failures as zero; frames with
/// `scored` false are skipped),
/// anchors at 0, N/4 and N/2.
double expected_average_overlap(const std::vector<double>& ious, const std::vector<bool>& scored);

struct CycleResult {
  BBox b_cycle;
  double giou_term = 0.0;
  double l1_term = 0.0;
  double recon_term = 0.0;
};

/// Tracks b forward over (prev, cur, next) and back again.
CycleResult cycle_check(const Image& prev, const Image& cur, const Image& next, const BBox& b,
                        const TrackerConfig& config);

/// Mean absolute corner difference, x by `ref.w`, y by `ref.h`.
double corner_l1(const BBox& a, const BBox& ref);

/// Shifted Charbonnier penalty: zero at zero.
double charbonnier(double d, double eps = 1e-3);

struct LossWeights {
  double cycle = 0.5;
  double aug = 0.1;
  double photo = 0.1;
  double smooth = 0.001;
};

struct LossReport {
  double giou_term = 0.0;
  double l1_term = 0.0;
  double recon_term = 0.0;
  double l_cycle = 0.0;
  double l_photo = 0.0;
  double l_smooth = 0.0;
  double l_aug = 0.0;
  double total = 0.0;
};

/// Weighted sum of the four loss components.
double total_loss(double l_cycle, double l_aug, double l_photo, double l_smooth, const LossWeights& w);

/// Mean penalty of |I0(x) - I1(x + flow(x))| over non-occluded pixels.
double photometric_loss(const FlowField& flow, const OcclusionMap& occ, const Image& i0, const Image& i1);
/// Mean edge-weighted first-order flow gradient magnitude.
double smoothness_loss(const FlowField& flow, const Image& i0);
/// (1 - GIoU) plus normalized corner L1 against the pseudo ground truth.
double augmentation_loss(const BBox& pred, const BBox& pseudo_gt);

struct LossInputs {
  const FlowField& flow;
  const OcclusionMap& occ;
  const Image& i0;
  const Image& i1;
  CycleResult cycle;
  BBox aug_pred;
  BBox aug_gt;
  LossWeights weights;
};

LossReport diagnostic_losses(const LossInputs& in);

/// "name,acc2d=...,rob2d=...,err2d_mean=...,err2d_std=...,eao=..." with 3 decimals.
std::string format_metrics(const std::string& name, const Metrics2D& m);

/// Element-wise mean.
Metrics2D mean_metrics(const std::vector<Metrics2D>& ms);

}  // namespace adatrack
