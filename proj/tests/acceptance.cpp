// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "adatrack/eval.hpp"
#include "adatrack/flow.hpp"
#include "adatrack/formats.hpp"
#include "adatrack/matcher.hpp"
#include "adatrack/synth.hpp"
#include "adatrack/template.hpp"
#include "adatrack/tracker.hpp"
#include "support.hpp"

using namespace adatrack;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(const char* id, bool pass, const std::string& detail) {
  std::printf("%s %s %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

/// Mean EPE over pixels whose true target lies inside the frame and inside
/// [x0, x1) x [y0, y1).
double masked_epe(const FlowField& est, const FlowField& gt, int x0, int y0, int x1, int y1) {
  double s = 0.0;
  long n = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const Flow2 g = gt.at(x, y);
      const double tx = x + 0.5 + g.u, ty = y + 0.5 + g.v;
      if (tx < 0 || ty < 0 || tx >= gt.width() || ty >= gt.height()) continue;
      s += std::hypot(est.at(x, y).u - g.u, est.at(x, y).v - g.v);
      ++n;
    }
  return n > 0 ? s / n : 0.0;
}

SynthSpec pair_spec(std::uint64_t seed, MotionSpec m) {
  SynthSpec s;
  s.seed = seed;
  s.frames = 2;
  s.size = {256, 256};
  s.motion = m;
  s.init_box = {96, 96, 64, 64};
  return s;
}

void check_flow() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> mag(0.0, 8.0), ang(0.0, 2.0 * std::numbers::pi);
  CorrelationFlow flow;
  double epe_sum = 0.0, worst_time = 0.0;
  for (int k = 0; k < 20; ++k) {
    const double r = mag(rng), a = ang(rng);
    const SynthSequence seq(pair_spec(100 + k, {.shift = {r * std::cos(a), r * std::sin(a)}}));
    const Image i0 = seq.image(0), i1 = seq.image(1);
    const auto t0 = Clock::now();
    const BidirectionalFlow bf = flow.estimate(i0, i1, 4);
    worst_time = std::max(worst_time, seconds_since(t0));
    epe_sum += masked_epe(bf.forward.flow, seq.flow_from_prev(1), 0, 0, 256, 256);
  }
  double zoom_worst = 0.0;
  for (int k = 0; k < 5; ++k) {
    const SynthSequence seq(pair_spec(200 + k, {.shift = {}, .zoom = 1.1}));
    const FlowEstimate e = estimate_flow(seq.image(0), seq.image(1), 4);
    zoom_worst = std::max(zoom_worst, masked_epe(e.flow, seq.flow_from_prev(1), 64, 64, 192, 192));
  }
  const double epe = epe_sum / 20;
  report("A1", epe <= 0.5 && zoom_worst <= 0.7 && worst_time <= 1.0,
         fmt("translation_epe=%.3f (<=0.5) zoom1.1_central_epe_worst_of_5=%.3f (<=0.7) "
             "bidirectional_runtime_max=%.3fs (<=1.0)",
             epe, zoom_worst, worst_time));
}

template <class F>
FlowField template_field(F&& f) {
  FlowField g(kTemplateSize, kTemplateSize);
  for (int y = 0; y < kTemplateSize; ++y)
    for (int x = 0; x < kTemplateSize; ++x) {
      const Point2 d = f(Point2{x + 0.5, y + 0.5});
      g.at(x, y) = {static_cast<float>(d.u), static_cast<float>(d.v)};
    }
  return g;
}

void check_template_warp() {
  const Point2 c{kTemplateSize / 2.0, kTemplateSize / 2.0};
  auto state = [&](const FlowField& g, std::uint64_t seed) {
    TemplateState st;
    st.p0 = fixtures::textured(seed, kTemplateSize, kTemplateSize, 32.0);
    st.g = g;
    st.center = c;
    st.scale = scale_ratio(g, c);
    return st;
  };
  double worst_psnr = 1e9;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (double s : {0.8, 0.9, 1.1, 1.25}) {
      const TemplateState st = state(template_field([&](Point2 p) { return (p - c) * (s - 1.0); }), seed);
      worst_psnr = std::min(worst_psnr, fixtures::psnr(warp_template(st), st.p0));
    }
    for (Point2 sh : {Point2{3.5, 0}, Point2{-6, 2.25}}) {
      const TemplateState st = state(template_field([&](Point2) { return sh; }), seed);
      worst_psnr = std::min(worst_psnr, fixtures::psnr(warp_template(st), st.p0));
    }
  }
  const double th = 10.0 * std::numbers::pi / 180.0, ct = std::cos(th), sn = std::sin(th);
  const int lo = static_cast<int>(0.15 * kTemplateSize), hi = kTemplateSize - lo;
  double worst_ssim = 1.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const TemplateState st = state(template_field([&](Point2 p) {
                                     const double dx = p.u - c.u, dy = p.v - c.v;
                                     return Point2{ct * dx - sn * dy - dx, sn * dx + ct * dy - dy};
                                   }),
                                   seed);
    Image oracle(kTemplateSize, kTemplateSize);
    for (int y = 0; y < kTemplateSize; ++y)
      for (int x = 0; x < kTemplateSize; ++x) {
        const double dx = x + 0.5 - c.u, dy = y + 0.5 - c.v;
        oracle.at(x, y) = sample_bilinear(st.p0, c.u + ct * dx + sn * dy, c.v - sn * dx + ct * dy);
      }
    worst_ssim = std::min(worst_ssim, fixtures::ssim(warp_template(st), oracle, lo, lo, hi, hi));
  }
  report("A2", worst_psnr >= 40.0 && worst_ssim >= 0.9,
         fmt("zoom_shift_psnr_min=%.2fdB (>=40) rotation10_ssim_central70_min=%.4f (>=0.9)", worst_psnr,
             worst_ssim));
}

/// Standard end-to-end recipe: 640x480, 48 px box, 2 px/frame shift, zoom
/// 1.002/frame, sinusoidal deformation of amplitude 4 px.
SynthSpec suite_spec(std::uint64_t seed, int frames) {
  SynthSpec s;
  s.seed = seed;
  s.frames = frames;
  s.size = {640, 480};
  s.init_box = {80, 60, 48, 48};
  s.motion.shift = {1.6, 1.2};
  s.motion.zoom = 1.002;
  s.deform.kind = DeformKind::Sinusoidal;
  s.deform.amplitude = 4.0;
  s.deform.spatial_period = 64.0;
  s.deform.temporal_period = 40.0;
  return s;
}

struct RunStats {
  double mean_iou = 0.0;
  int occluded = 0;
  double seconds = 0.0;
};

RunStats track_rendered(const SynthSequence& seq, const std::vector<Image>& frames, TrackMode mode) {
  TrackerConfig cfg;
  cfg.mode = mode;
  const auto t0 = Clock::now();
  const std::vector<TrackResult> res = track_sequence(frames, seq.gt_box(0), cfg);
  RunStats st;
  st.seconds = seconds_since(t0);
  for (const TrackResult& r : res) {
    if (r.status == FrameStatus::Occluded) ++st.occluded;
    st.mean_iou += r.bbox ? iou(*r.bbox, seq.gt_box(r.frame_index)) : 0.0;
  }
  st.mean_iou /= res.size();
  return st;
}

std::vector<Image> render(const SynthSequence& seq) {
  std::vector<Image> frames;
  for (int t = 0; t < seq.frames(); ++t) frames.push_back(seq.image(t));
  return frames;
}

void check_end_to_end() {
  const SynthSequence seq(suite_spec(1, 200));
  const std::vector<Image> frames = render(seq);
  const RunStats st = track_rendered(seq, frames, TrackMode::Full);
  report("A3", st.mean_iou >= 0.7 && st.occluded == 0 && st.seconds <= 120.0,
         fmt("mean_iou=%.3f (>=0.7) occluded_frames=%d (==0) tracking_runtime=%.1fs (<=120)", st.mean_iou,
             st.occluded, st.seconds));
}

void check_ablation() {
  double sum[3] = {0, 0, 0};
  const TrackMode modes[3] = {TrackMode::InterFrameOnly, TrackMode::TemplateOnly, TrackMode::Full};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const SynthSequence seq(suite_spec(seed, 100));
    const std::vector<Image> frames = render(seq);
    for (int m = 0; m < 3; ++m) sum[m] += track_rendered(seq, frames, modes[m]).mean_iou;
  }
  const double ifo = sum[0] / 10, to = sum[1] / 10, full = sum[2] / 10;
  report("A4", full - to >= 0.03 && to - ifo >= 0.03,
         fmt("mean_iou inter_frame_only=%.3f template_only=%.3f full=%.3f gaps full-template=%.3f "
             "template-inter=%.3f (each >=0.03)",
             ifo, to, full, full - to, to - ifo));
}

void check_occlusion_gate() {
  bool ok = true;
  double worst_recovery = 1.0;
  int worst_offset = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthSpec s;
    s.seed = seed;
    s.frames = 30;
    s.size = {256, 256};
    s.init_box = {80, 80, 64, 64};
    s.motion.shift = {1.0, 0.5};
    OccluderSpec o;
    o.size = 90;
    o.entry_frame = 10;
    o.exit_frame = 16;
    o.start = s.init_box.center() + Point2{10.0 * s.motion.shift.u, 10.0 * s.motion.shift.v};
    o.velocity = s.motion.shift;
    s.occluder = o;
    const SynthSequence seq(s);
    const std::vector<TrackResult> res = track_sequence(render(seq), seq.gt_box(0), {});
    std::vector<bool> pred(s.frames, false), gt(s.frames, false);
    for (const TrackResult& r : res) pred[r.frame_index] = r.status == FrameStatus::Occluded;
    int last_gt = -1;
    for (int t = 1; t < s.frames; ++t) {
      gt[t] = !seq.visible(t);
      if (gt[t]) last_gt = t;
    }
    // Every flagged frame lies within one frame of a GT-occluded frame and
    // vice versa.
    auto near = [&](const std::vector<bool>& v, int t) {
      for (int d = -1; d <= 1; ++d)
        if (t + d >= 1 && t + d < s.frames && v[t + d]) return true;
      return false;
    };
    for (int t = 1; t < s.frames; ++t) {
      if ((pred[t] && !near(gt, t)) || (gt[t] && !near(pred, t))) {
        ok = false;
        worst_offset = std::max(worst_offset, 2);
      } else if (pred[t] != gt[t]) {
        worst_offset = std::max(worst_offset, 1);
      }
    }
    double best = 0.0;
    for (int t = last_gt + 1; t <= last_gt + 3 && t < s.frames; ++t) {
      const TrackResult& r = res[t - 1];
      if (r.bbox) best = std::max(best, iou(*r.bbox, seq.gt_box(t)));
    }
    worst_recovery = std::min(worst_recovery, best);
  }
  ok = ok && worst_recovery >= 0.5;
  report("A5", ok,
         fmt("5 sequences: occluded_status_boundary_offset_max=%d (<=1) post_occlusion_best_iou_3f_min=%.3f (>=0.5)",
             worst_offset, worst_recovery));
}

CycleResult cycle_of(const SynthSequence& seq) {
  return cycle_check(seq.image(0), seq.image(1), seq.image(2), seq.gt_box(0), {});
}

double cycle_loss(const CycleResult& c) { return c.giou_term + c.l1_term + c.recon_term; }

void check_cycle() {
  double static_giou = 0.0, static_recon = 0.0, smooth_min = 1.0;
  int worse = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SynthSpec s = pair_spec(seed, {});
    s.frames = 3;
    const CycleResult st = cycle_of(SynthSequence(s));
    static_giou = std::max(static_giou, st.giou_term);
    static_recon = std::max(static_recon, st.recon_term);

    SynthSpec m = s;
    m.motion = {.shift = {1.6, 1.2}, .zoom = 1.002};
    m.deform.kind = DeformKind::Sinusoidal;
    m.deform.amplitude = 4.0;
    m.deform.spatial_period = 64.0;
    m.deform.temporal_period = 40.0;
    const CycleResult clean = cycle_of(SynthSequence(m));
    smooth_min = std::min(smooth_min, 1.0 - clean.giou_term);

    OccluderSpec o;
    o.size = 48;
    o.start = {m.init_box.x + 8.0, m.init_box.center().v};
    o.entry_frame = 1;
    m.occluder = o;
    if (cycle_loss(cycle_of(SynthSequence(m))) > cycle_loss(clean)) ++worse;
  }
  report("A6", static_giou <= 0.02 && static_recon <= 0.01 && smooth_min >= 0.9 && worse == 10,
         fmt("static giou_term_max=%.4f (<=0.02) recon_term_max=%.4f (<=0.01) smooth giou_min=%.3f (>=0.9) "
             "occluded_worse=%d/10",
             static_giou, static_recon, smooth_min, worse));
}

void check_geometry() {
  std::mt19937_64 rng(77);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const BBox a = fixtures::random_box(rng), b = fixtures::random_box(rng);
    const double x0 = std::min(a.x, b.x), y0 = std::min(a.y, b.y);
    const double x1 = std::max(a.right(), b.right()), y1 = std::max(a.bottom(), b.bottom());
    std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1);
    constexpr int kSamples = 1000000;
    int in_a = 0, in_b = 0, both = 0;
    for (int n = 0; n < kSamples; ++n) {
      const Point2 p{ux(rng), uy(rng)};
      const bool pa = a.contains(p), pb = b.contains(p);
      in_a += pa;
      in_b += pb;
      both += pa && pb;
    }
    const double uni = in_a + in_b - both;
    const double iou_mc = uni > 0 ? both / uni : 0.0;
    const double giou_mc = iou_mc - (kSamples - uni) / kSamples;
    worst = std::max({worst, std::abs(iou(a, b) - iou_mc), std::abs(giou(a, b) - giou_mc)});
  }

  bool minmax_exact = true;
  std::uniform_real_distribution<double> coord(-500.0, 500.0);
  for (int k = 0; k < 1000; ++k) {
    std::vector<Point2> pts(1 + k % 50);
    for (Point2& p : pts) p = {coord(rng), coord(rng)};
    double x0 = pts[0].u, y0 = pts[0].v, x1 = x0, y1 = y0;
    for (const Point2& p : pts) {
      x0 = std::min(x0, p.u);
      y0 = std::min(y0, p.v);
      x1 = std::max(x1, p.u);
      y1 = std::max(y1, p.v);
    }
    const BBox e = min_max_enclose(pts);
    minmax_exact = minmax_exact && e.x == x0 && e.y == y0 && e.w == std::max(x1 - x0, 1.0) &&
                   e.h == std::max(y1 - y0, 1.0);
  }

  double interp = 0.0;
  std::uniform_real_distribution<double> d(-20.0, 20.0), unit(0.0, 1.0);
  for (int k = 0; k < 100000; ++k) {
    const Point2 tl{d(rng), d(rng)}, br{d(rng), d(rng)};
    const double s = unit(rng), t = unit(rng);
    const Point2 tr{br.u, tl.v}, bl{tl.u, br.v};
    const double u = (1 - s) * (1 - t) * tl.u + s * (1 - t) * tr.u + (1 - s) * t * bl.u + s * t * br.u;
    const double v = (1 - s) * (1 - t) * tl.v + s * (1 - t) * tr.v + (1 - s) * t * bl.v + s * t * br.v;
    const Point2 got = interpolate_corner_flow(tl, br, s, t);
    interp = std::max({interp, std::abs(got.u - u), std::abs(got.v - v)});
  }
  report("A7", worst <= 1e-2 && minmax_exact && interp <= 1e-6,
         fmt("iou_giou_vs_monte_carlo_max_err=%.5f (<=1e-2, 1e3 pairs x 1e6 samples) minmax_exact=%s "
             "corner_interp_max_err=%.2e (<=1e-6)",
             worst, minmax_exact ? "yes" : "no", interp));
}

void check_loss() {
  const double unit = total_loss(1, 1, 1, 1, {});
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(0.0, 3.0);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const double c[4] = {d(rng), d(rng), d(rng), d(rng)};
    const LossWeights base;
    const double t0 = total_loss(c[0], c[1], c[2], c[3], base);
    for (int i = 0; i < 4; ++i) {
      LossWeights w = base;
      double* field[4] = {&w.cycle, &w.aug, &w.photo, &w.smooth};
      const double delta = d(rng);
      *field[i] += delta;
      worst = std::max(worst, std::abs(total_loss(c[0], c[1], c[2], c[3], w) - t0 - delta * c[i]));
    }
  }
  report("A8", std::abs(unit - 0.701) <= 1e-12 && worst <= 1e-12,
         fmt("total_unit=%.15f (==0.701) linearity_max_err=%.2e", unit, worst));
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("ADATRACK_THREADS=1 '") + ADATRACK_CLI + "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void check_determinism() {
  const fs::path root = fs::temp_directory_path() / "adatrack_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  SynthSpec s = suite_spec(3, 12);
  OccluderSpec o;
  o.size = 60;
  o.entry_frame = 6;
  o.start = {200, 160};
  s.occluder = o;
  write_text(root / "spec.json", synth_spec_to_json(s));
  auto q = [](const fs::path& p) { return "'" + p.string() + "'"; };
  bool ok = run_cli("synth " + q(root / "spec.json") + " --seed 9 --out " + q(root / "a")) == 0 &&
            run_cli("synth " + q(root / "spec.json") + " --seed 9 --out " + q(root / "b")) == 0;
  int files = 0;
  bool synth_same = ok;
  if (ok) {
    for (const auto& e : fs::directory_iterator(root / "a")) {
      ++files;
      synth_same = synth_same && fs::exists(root / "b" / e.path().filename()) &&
                   read_text(e.path()) == read_text(root / "b" / e.path().filename());
    }
  }
  const bool tracked = ok && run_cli("track " + q(root / "a") + " --out " + q(root / "p1.csv")) == 0 &&
                       run_cli("track " + q(root / "a") + " --out " + q(root / "p2.csv")) == 0;
  const bool track_same = tracked && read_text(root / "p1.csv") == read_text(root / "p2.csv");
  report("A9", synth_same && track_same,
         fmt("synth_byte_identical=%s (%d files) track_csv_byte_identical=%s", synth_same ? "yes" : "no", files,
             track_same ? "yes" : "no"));
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<void()>>> checks{
      {"A1", check_flow},           {"A2", check_template_warp}, {"A3", check_end_to_end},
      {"A4", check_ablation},       {"A5", check_occlusion_gate}, {"A6", check_cycle},
      {"A7", check_geometry},       {"A8", check_loss},           {"A9", check_determinism}};
  // Optional arguments select criteria by id, e.g. "A1 A7".
  for (const auto& [id, fn] : checks) {
    if (argc > 1 && std::find(argv + 1, argv + argc, id) == argv + argc) continue;
    try {
      fn();
    } catch (const std::exception& e) {
      report(id.c_str(), false, std::string("exception: ") + e.what());
    }
  }
  return failures == 0 ? 0 : 1;
}
