// adatrack command-line tool: synth, track, eval, overlay, selfcheck.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "adatrack/errors.hpp"
#include "adatrack/eval.hpp"
#include "adatrack/formats.hpp"
#include "adatrack/image_io.hpp"
#include "adatrack/synth.hpp"
#include "adatrack/tracker.hpp"

namespace fs = std::filesystem;
using namespace adatrack;

namespace {

int worker_count() {
  const char* env = std::getenv("ADATRACK_THREADS");
  if (env == nullptr || *env == '\0') return std::max(1u, std::thread::hardware_concurrency());
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw InputError("ADATRACK_THREADS must be a positive integer");
  return static_cast<int>(n);
}

/// Runs fn(0..n-1) on up to ADATRACK_THREADS workers; rethrows the first error.
void parallel_for(int n, const std::function<void(int)>& fn) {
  const int workers = std::min(worker_count(), std::max(n, 1));
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex mu;
  auto run = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!err) err = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

struct Sequence {
  fs::path dir;
  int frames = 0;
  Image frame(int t) const {
    const fs::path p = dir / frame_name(t);
    if (!fs::exists(p)) throw InputError("missing frame " + p.string());
    return read_png(p);
  }
};

Sequence open_sequence(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("not a sequence directory: " + dir.string());
  Sequence s{dir, 0};
  if (fs::exists(dir / "meta.json")) {
    try {
      s.frames = nlohmann::json::parse(read_text(dir / "meta.json")).at("frames").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("bad meta.json: ") + e.what());
    }
    for (int t = 0; t < s.frames; ++t) {
      if (!fs::exists(dir / frame_name(t))) throw InputError("missing frame " + (dir / frame_name(t)).string());
    }
  } else {
    while (fs::exists(dir / frame_name(s.frames))) ++s.frames;
  }
  if (s.frames < 1) throw InputError("no frames in " + dir.string());
  return s;
}

struct ConfigFlags {
  std::string config_file;
  std::optional<std::string> mode;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<int> iters;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "Tracker config JSON");
    cmd->add_option("--mode", mode, "inter_frame_only | template_only | full");
    cmd->add_option("--alpha", alpha, "Template fusion weight");
    cmd->add_option("--beta", beta, "Occlusion threshold");
    cmd->add_option("--iters", iters, "Flow iterations");
  }

  TrackerConfig resolve() const {
    TrackerConfig c = config_file.empty() ? TrackerConfig{} : tracker_config_from_json(read_text(config_file));
    if (mode) c.mode = parse_mode(*mode);
    if (alpha) c.alpha = *alpha;
    if (beta) c.beta = *beta;
    if (iters) c.flow_iters = *iters;
    c.validate();
    return c;
  }
};

int cmd_synth(const std::string& spec_file, const std::string& out, std::optional<std::uint64_t> seed,
              bool dump_flow) {
  SynthSpec spec = synth_spec_from_json(read_text(spec_file));
  if (seed) spec.seed = *seed;
  const SynthSequence seq(spec);
  const fs::path dir(out);
  fs::create_directories(dir);
  std::vector<GtRow> gt(spec.frames);
  parallel_for(spec.frames, [&](int t) {
    write_png(dir / frame_name(t), seq.image(t));
    gt[t] = {t, {seq.gt_box(t), seq.visible(t)}};
    if (dump_flow && t > 0) {
      char name[32];
      std::snprintf(name, sizeof name, "%06d.adfl", t);
      write_flow(dir / name, seq.flow_from_prev(t));
    }
  });
  write_text(dir / "boxes_gt.csv", format_gt_csv(gt));
  nlohmann::json meta;
  meta["width"] = spec.size.width;
  meta["height"] = spec.size.height;
  meta["frames"] = spec.frames;
  meta["spec"] = nlohmann::json::parse(synth_spec_to_json(spec));
  write_text(dir / "meta.json", meta.dump(2) + "\n");
  return 0;
}

BBox init_box_for(const Sequence& seq, const std::string& init) {
  if (!init.empty()) return parse_box(init);
  const fs::path gt = seq.dir / "boxes_gt.csv";
  if (!fs::exists(gt)) throw InputError("no --init box and no boxes_gt.csv");
  for (const GtRow& r : parse_gt_csv(read_text(gt)))
    if (r.frame == 0) return r.entry.box;
  throw InputError("boxes_gt.csv has no frame 0");
}

int cmd_track(const std::string& seq_dir, const std::string& init_text, const ConfigFlags& flags, std::string out) {
  const TrackerConfig cfg = flags.resolve();
  const Sequence seq = open_sequence(seq_dir);
  if (seq.frames < 2) throw InputError("need at least 2 frames");
  const BBox b0 = init_box_for(seq, init_text);
  TrackerState st = init(seq.frame(0), b0, cfg);
  std::vector<TrackResult> rows;
  bool warned = false;
  for (int t = 1; t < seq.frames; ++t) {
    if (st.status == TrackerStatus::Lost) {
      if (!warned) std::cerr << "warning: target left the frame, lost from frame " << t << "\n";
      warned = true;
      TrackResult r;
      r.frame_index = t;
      r.status = FrameStatus::Occluded;
      rows.push_back(r);
      continue;
    }
    rows.push_back(step(st, seq.frame(t)));
  }
  if (out.empty()) out = (seq.dir / "boxes_pred.csv").string();
  write_text(out, format_pred_csv(rows));
  return 0;
}

int cmd_eval(const std::vector<std::string>& files, const std::string& out) {
  if (files.size() < 2 || files.size() % 2 != 0) throw InputError("eval expects PRED GT pairs");
  const int n = static_cast<int>(files.size() / 2);
  std::vector<Metrics2D> ms(n);
  parallel_for(n, [&](int k) {
    const std::vector<TrackResult> pred = parse_pred_csv(read_text(files[2 * k]));
    const std::vector<GtRow> gt = parse_gt_csv(read_text(files[2 * k + 1]));
    ms[k] = metric_suite(pred, align_gt(pred, gt));
  });
  std::string report;
  for (int k = 0; k < n; ++k) {
    fs::path p = fs::path(files[2 * k]).parent_path();
    const std::string name = p.filename().empty() ? "seq" + std::to_string(k) : p.filename().string();
    report += format_metrics(name, ms[k]) + "\n";
  }
  report += format_metrics("ALL", mean_metrics(ms)) + "\n";
  std::cout << report;
  if (!out.empty()) write_text(out, report);
  return 0;
}

void draw_rect(Image& img, const BBox& b, const float (&rgb)[3]) {
  const int x0 = static_cast<int>(std::floor(b.x)), y0 = static_cast<int>(std::floor(b.y));
  const int x1 = static_cast<int>(std::ceil(b.right())) - 1, y1 = static_cast<int>(std::ceil(b.bottom())) - 1;
  auto put = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) return;
    for (int c = 0; c < 3; ++c) img.at(x, y, c) = rgb[c];
  };
  for (int k = 0; k < 2; ++k) {
    for (int x = x0; x <= x1; ++x) {
      put(x, y0 + k);
      put(x, y1 - k);
    }
    for (int y = y0; y <= y1; ++y) {
      put(x0 + k, y);
      put(x1 - k, y);
    }
  }
}

Image to_rgb(const Image& img) {
  if (img.channels() == 3) return img;
  const Image g = to_gray(img);
  Image out(g.width(), g.height(), 3);
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = g.at(x, y);
  return out;
}

int cmd_overlay(const std::string& seq_dir, const std::string& pred_csv, const std::string& out) {
  constexpr float kPred[3] = {1.0f, 0.1f, 0.1f};
  constexpr float kGt[3] = {0.1f, 1.0f, 0.1f};
  constexpr float kMarker[3] = {1.0f, 0.9f, 0.0f};
  constexpr int kMarkerSize = 10;
  const Sequence seq = open_sequence(seq_dir);
  const std::vector<TrackResult> pred = parse_pred_csv(read_text(pred_csv));
  std::vector<std::optional<GtEntry>> gt(seq.frames);
  if (fs::exists(seq.dir / "boxes_gt.csv")) {
    for (const GtRow& r : parse_gt_csv(read_text(seq.dir / "boxes_gt.csv")))
      if (r.frame >= 0 && r.frame < seq.frames) gt[r.frame] = r.entry;
  }
  std::vector<const TrackResult*> by_frame(seq.frames, nullptr);
  for (const TrackResult& r : pred) {
    if (r.frame_index < 0 || r.frame_index >= seq.frames) throw InputError("prediction frame out of range");
    by_frame[r.frame_index] = &r;
  }
  const fs::path dir(out);
  fs::create_directories(dir);
  parallel_for(seq.frames, [&](int t) {
    Image img = to_rgb(seq.frame(t));
    if (gt[t]) draw_rect(img, gt[t]->box, kGt);
    if (const TrackResult* r = by_frame[t]) {
      if (r->bbox) {
        draw_rect(img, *r->bbox, kPred);
      } else {
        for (int y = 0; y < std::min(kMarkerSize, img.height()); ++y)
          for (int x = 0; x < std::min(kMarkerSize, img.width()); ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = kMarker[c];
      }
    }
    write_png(dir / frame_name(t), img);
  });
  return 0;
}

int cmd_selfcheck(const std::string& seq_dir, std::string boxes, const ConfigFlags& flags, const std::string& out) {
  const TrackerConfig cfg = flags.resolve();
  const Sequence seq = open_sequence(seq_dir);
  if (seq.frames < 3) throw InputError("selfcheck needs at least 3 frames");
  if (boxes.empty()) boxes = (seq.dir / "boxes_gt.csv").string();
  std::vector<std::optional<BBox>> start(seq.frames);
  const std::string text = read_text(boxes);
  if (text.rfind(kPredHeader, 0) == 0) {
    for (const TrackResult& r : parse_pred_csv(text))
      if (r.bbox && r.frame_index >= 0 && r.frame_index < seq.frames) start[r.frame_index] = r.bbox;
  } else {
    for (const GtRow& r : parse_gt_csv(text))
      if (r.entry.visible && r.frame >= 0 && r.frame < seq.frames) start[r.frame] = r.entry.box;
  }
  const int n = seq.frames - 2;
  std::vector<std::optional<CycleResult>> res(n);
  parallel_for(n, [&](int k) {
    if (!start[k]) return;
    res[k] = cycle_check(seq.frame(k), seq.frame(k + 1), seq.frame(k + 2), *start[k], cfg);
  });
  std::string report = "frame,giou_term,l1_term,recon_term\n";
  double sg = 0.0, sl = 0.0, sr = 0.0;
  int m = 0;
  char buf[128];
  for (int k = 0; k < n; ++k) {
    if (!res[k]) continue;
    std::snprintf(buf, sizeof buf, "%d,%.4f,%.4f,%.4f\n", k, res[k]->giou_term, res[k]->l1_term, res[k]->recon_term);
    report += buf;
    sg += res[k]->giou_term;
    sl += res[k]->l1_term;
    sr += res[k]->recon_term;
    ++m;
  }
  if (m == 0) throw InputError("no frame has a start box");
  std::snprintf(buf, sizeof buf, "mean,%.4f,%.4f,%.4f\n", sg / m, sl / m, sr / m);
  report += buf;
  std::cout << report;
  if (!out.empty()) write_text(out, report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ada-Tracker style soft-tissue tracking toolkit"};
  app.require_subcommand(1);

  std::string spec_file, out, seq_dir, init_text, pred_csv, boxes;
  std::optional<std::uint64_t> seed;
  bool dump_flow = false;
  std::vector<std::string> eval_files;
  ConfigFlags flags;

  CLI::App* synth = app.add_subcommand("synth", "Render a synthetic sequence with ground truth");
  synth->add_option("spec", spec_file, "Generator spec JSON")->required();
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--seed", seed, "Override the spec seed");
  synth->add_flag("--flow", dump_flow, "Also write ground-truth flow dumps");

  CLI::App* track = app.add_subcommand("track", "Track a box through a sequence");
  track->add_option("seq", seq_dir, "Sequence directory")->required();
  track->add_option("--init", init_text, "Initial box x,y,w,h (default: boxes_gt.csv frame 0)");
  track->add_option("--out", out, "Output CSV (default: <seq>/boxes_pred.csv)");
  flags.attach(track);

  CLI::App* eval = app.add_subcommand("eval", "Score predictions against ground truth");
  eval->add_option("files", eval_files, "PRED GT [PRED GT ...]")->required();
  eval->add_option("--out", out, "Also write the report here");

  CLI::App* overlay = app.add_subcommand("overlay", "Draw predicted and ground-truth boxes");
  overlay->add_option("seq", seq_dir, "Sequence directory")->required();
  overlay->add_option("pred", pred_csv, "Prediction CSV")->required();
  overlay->add_option("--out", out, "Output directory")->required();

  CLI::App* selfcheck = app.add_subcommand("selfcheck", "Cycle-consistency residuals over frame triples");
  selfcheck->add_option("seq", seq_dir, "Sequence directory")->required();
  selfcheck->add_option("--boxes", boxes, "Start boxes, GT or prediction CSV (default: boxes_gt.csv)");
  selfcheck->add_option("--out", out, "Also write the report here");
  flags.attach(selfcheck);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*synth) return cmd_synth(spec_file, out, seed, dump_flow);
    if (*track) return cmd_track(seq_dir, init_text, flags, out);
    if (*eval) return cmd_eval(eval_files, out);
    if (*overlay) return cmd_overlay(seq_dir, pred_csv, out);
    if (*selfcheck) return cmd_selfcheck(seq_dir, boxes, flags, out);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvariantViolation& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
