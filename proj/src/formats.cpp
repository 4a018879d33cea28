#include "adatrack/formats.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "adatrack/errors.hpp"

namespace adatrack {

using nlohmann::json;

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) throw InputError("bad number: '" + s + "'");
  return v;
}

int to_int(const std::string& s) {
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) throw InputError("bad integer: '" + s + "'");
  return v;
}

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  // Avoid "-0.000" so that values rounding to zero serialize the same way.
  if (std::string(buf) == "-0.000") return "0.000";
  return buf;
}

void expect_header(const std::vector<std::string>& lines, const char* header) {
  if (lines.empty() || lines.front() != header) throw InputError(std::string("expected header '") + header + "'");
}

json point_json(Point2 p) { return json::array({p.u, p.v}); }

Point2 point_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw InputError("expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw InputError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw InputError("unknown key in " + where + ": " + key);
  }
}

template <class T>
void read_field(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("invalid JSON: ") + e.what());
  }
}

std::string texture_name(const SynthSpec& s) {
  switch (s.texture) {
    case TextureKind::Perlin:
      return "perlin";
    case TextureKind::Checker:
      return "checker";
    case TextureKind::File:
      return s.texture_path;
  }
  return "perlin";
}

std::string deform_name(DeformKind k) {
  switch (k) {
    case DeformKind::None:
      return "none";
    case DeformKind::Sinusoidal:
      return "sinusoidal";
    case DeformKind::ThinPlate:
      return "thin_plate";
  }
  return "none";
}

DeformKind parse_deform(const std::string& s) {
  if (s == "none") return DeformKind::None;
  if (s == "sinusoidal") return DeformKind::Sinusoidal;
  if (s == "thin_plate") return DeformKind::ThinPlate;
  throw InputError("unknown deformation kind: " + s);
}

SpriteShape parse_shape(const std::string& s) {
  if (s == "square") return SpriteShape::Square;
  if (s == "disk") return SpriteShape::Disk;
  throw InputError("unknown occluder shape: " + s);
}

SynthSpec spec_from(const json& j) {
  reject_unknown(j,
                 {"seed", "frames", "size", "texture", "texture_scale", "motion", "deform", "illumination",
                  "noise_sigma", "occluder", "init_box"},
                 "spec");
  SynthSpec s;
  read_field(j, "seed", s.seed);
  read_field(j, "frames", s.frames);
  if (j.contains("size")) {
    const json& z = j.at("size");
    if (!z.is_array() || z.size() != 2) throw InputError("size must be [width, height]");
    s.size = {z[0].get<int>(), z[1].get<int>()};
  }
  if (j.contains("texture")) {
    const std::string t = j.at("texture").get<std::string>();
    if (t == "perlin") {
      s.texture = TextureKind::Perlin;
    } else if (t == "checker") {
      s.texture = TextureKind::Checker;
    } else {
      s.texture = TextureKind::File;
      s.texture_path = t;
    }
  }
  read_field(j, "texture_scale", s.texture_scale);
  if (j.contains("motion")) {
    const json& m = j.at("motion");
    reject_unknown(m, {"shift", "zoom", "rotation_deg"}, "motion");
    if (m.contains("shift")) s.motion.shift = point_from(m.at("shift"));
    read_field(m, "zoom", s.motion.zoom);
    read_field(m, "rotation_deg", s.motion.rotation_deg);
  }
  if (j.contains("deform")) {
    const json& d = j.at("deform");
    reject_unknown(d, {"kind", "amplitude", "spatial_period", "temporal_period", "control_points", "drift"}, "deform");
    if (d.contains("kind")) s.deform.kind = parse_deform(d.at("kind").get<std::string>());
    read_field(d, "amplitude", s.deform.amplitude);
    read_field(d, "spatial_period", s.deform.spatial_period);
    read_field(d, "temporal_period", s.deform.temporal_period);
    read_field(d, "control_points", s.deform.control_points);
    read_field(d, "drift", s.deform.drift);
  }
  if (j.contains("illumination")) {
    const json& l = j.at("illumination");
    reject_unknown(l, {"gain_drift", "bias_drift"}, "illumination");
    read_field(l, "gain_drift", s.illumination.gain_drift);
    read_field(l, "bias_drift", s.illumination.bias_drift);
  }
  read_field(j, "noise_sigma", s.noise_sigma);
  if (j.contains("occluder") && !j.at("occluder").is_null()) {
    const json& o = j.at("occluder");
    reject_unknown(o, {"shape", "size", "entry_frame", "exit_frame", "start", "velocity", "value"}, "occluder");
    OccluderSpec oc;
    if (o.contains("shape")) oc.shape = parse_shape(o.at("shape").get<std::string>());
    read_field(o, "size", oc.size);
    read_field(o, "entry_frame", oc.entry_frame);
    read_field(o, "exit_frame", oc.exit_frame);
    if (o.contains("start")) oc.start = point_from(o.at("start"));
    if (o.contains("velocity")) oc.velocity = point_from(o.at("velocity"));
    read_field(o, "value", oc.value);
    s.occluder = oc;
  }
  if (j.contains("init_box")) {
    const json& b = j.at("init_box");
    if (!b.is_array() || b.size() != 4) throw InputError("init_box must be [x, y, w, h]");
    s.init_box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
  }
  return s;
}

}  // namespace

std::string format_pred_csv(const std::vector<TrackResult>& rows) {
  std::string out = std::string(kPredHeader) + "\n";
  for (const TrackResult& r : rows) {
    out += std::to_string(r.frame_index) + ",";
    if (r.status == FrameStatus::Tracked && r.bbox) {
      out += fixed3(r.bbox->x) + "," + fixed3(r.bbox->y) + "," + fixed3(r.bbox->w) + "," + fixed3(r.bbox->h) + ",T,";
    } else {
      out += ",,,,O,";
    }
    out += fixed3(r.occlusion_fraction) + "," + fixed3(r.match_confidence) + "\n";
  }
  return out;
}

std::vector<TrackResult> parse_pred_csv(const std::string& text) {
  const std::vector<std::string> lines = lines_of(text);
  expect_header(lines, kPredHeader);
  if (lines.size() < 2) throw InputError("prediction file has no rows");
  std::vector<TrackResult> out;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const std::vector<std::string> f = split(lines[n], ',');
    if (f.size() != 8) throw InputError("prediction row " + std::to_string(n) + " needs 8 fields");
    TrackResult r;
    r.frame_index = to_int(f[0]);
    if (f[5] == "T") {
      r.status = FrameStatus::Tracked;
      r.bbox = BBox{to_double(f[1]), to_double(f[2]), to_double(f[3]), to_double(f[4])};
    } else if (f[5] == "O") {
      r.status = FrameStatus::Occluded;
      if (!f[1].empty() || !f[2].empty() || !f[3].empty() || !f[4].empty()) {
        throw InputError("occluded row " + std::to_string(n) + " carries a box");
      }
    } else {
      throw InputError("unknown status '" + f[5] + "'");
    }
    r.occlusion_fraction = to_double(f[6]);
    r.match_confidence = to_double(f[7]);
    out.push_back(r);
  }
  return out;
}

std::string format_gt_csv(const std::vector<GtRow>& rows) {
  std::string out = std::string(kGtHeader) + "\n";
  for (const GtRow& r : rows) {
    const BBox& b = r.entry.box;
    out += std::to_string(r.frame) + "," + fixed3(b.x) + "," + fixed3(b.y) + "," + fixed3(b.w) + "," + fixed3(b.h) +
           "," + (r.entry.visible ? "1" : "0") + "\n";
  }
  return out;
}

std::vector<GtRow> parse_gt_csv(const std::string& text) {
  const std::vector<std::string> lines = lines_of(text);
  expect_header(lines, kGtHeader);
  if (lines.size() < 2) throw InputError("ground-truth file has no rows");
  std::vector<GtRow> out;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const std::vector<std::string> f = split(lines[n], ',');
    if (f.size() != 6) throw InputError("ground-truth row " + std::to_string(n) + " needs 6 fields");
    GtRow r;
    r.frame = to_int(f[0]);
    r.entry.box = {to_double(f[1]), to_double(f[2]), to_double(f[3]), to_double(f[4])};
    if (f[5] != "0" && f[5] != "1") throw InputError("visible must be 0 or 1");
    r.entry.visible = f[5] == "1";
    out.push_back(r);
  }
  return out;
}

std::vector<GtEntry> align_gt(const std::vector<TrackResult>& pred, const std::vector<GtRow>& gt) {
  std::vector<GtEntry> out;
  out.reserve(pred.size());
  std::size_t g = 0;
  for (const TrackResult& p : pred) {
    while (g < gt.size() && gt[g].frame < p.frame_index) ++g;
    if (g == gt.size() || gt[g].frame != p.frame_index) {
      throw InputError("no ground truth for frame " + std::to_string(p.frame_index));
    }
    out.push_back(gt[g].entry);
  }
  return out;
}

BBox parse_box(const std::string& text) {
  const std::vector<std::string> f = split(text, ',');
  if (f.size() != 4) throw InputError("box must be x,y,w,h");
  const BBox b{to_double(f[0]), to_double(f[1]), to_double(f[2]), to_double(f[3])};
  if (!b.valid()) throw InputError("box must have positive width and height");
  return b;
}

std::string synth_spec_to_json(const SynthSpec& s) {
  json j;
  j["seed"] = s.seed;
  j["frames"] = s.frames;
  j["size"] = json::array({s.size.width, s.size.height});
  j["texture"] = texture_name(s);
  j["texture_scale"] = s.texture_scale;
  j["motion"] = {{"shift", point_json(s.motion.shift)}, {"zoom", s.motion.zoom}, {"rotation_deg", s.motion.rotation_deg}};
  j["deform"] = {{"kind", deform_name(s.deform.kind)},
                 {"amplitude", s.deform.amplitude},
                 {"spatial_period", s.deform.spatial_period},
                 {"temporal_period", s.deform.temporal_period},
                 {"control_points", s.deform.control_points},
                 {"drift", s.deform.drift}};
  j["illumination"] = {{"gain_drift", s.illumination.gain_drift}, {"bias_drift", s.illumination.bias_drift}};
  j["noise_sigma"] = s.noise_sigma;
  if (s.occluder) {
    const OccluderSpec& o = *s.occluder;
    j["occluder"] = {{"shape", o.shape == SpriteShape::Square ? "square" : "disk"},
                     {"size", o.size},
                     {"entry_frame", o.entry_frame},
                     {"exit_frame", o.exit_frame},
                     {"start", point_json(o.start)},
                     {"velocity", point_json(o.velocity)},
                     {"value", o.value}};
  }
  j["init_box"] = json::array({s.init_box.x, s.init_box.y, s.init_box.w, s.init_box.h});
  return j.dump(2);
}

SynthSpec synth_spec_from_json(const std::string& text) {
  const json j = parse_json(text);
  try {
    return spec_from(j);
  } catch (const json::exception& e) {
    throw InputError(std::string("bad spec field: ") + e.what());
  }
}

std::string tracker_config_to_json(const TrackerConfig& c) {
  const json j = {{"alpha", c.alpha},
                  {"beta", c.beta},
                  {"flow_iters", c.flow_iters},
                  {"match_iters", c.match_iters},
                  {"feature_channels", c.feature_channels},
                  {"mode", to_string(c.mode)},
                  {"search_factor", c.search_factor},
                  {"roi_factor", c.roi_factor}};
  return j.dump(2);
}

TrackerConfig tracker_config_from_json(const std::string& text) {
  const json j = parse_json(text);
  reject_unknown(j,
                 {"alpha", "beta", "flow_iters", "match_iters", "feature_channels", "mode", "search_factor",
                  "roi_factor"},
                 "config");
  TrackerConfig c;
  try {
    read_field(j, "alpha", c.alpha);
    read_field(j, "beta", c.beta);
    read_field(j, "flow_iters", c.flow_iters);
    read_field(j, "match_iters", c.match_iters);
    read_field(j, "feature_channels", c.feature_channels);
    if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
    read_field(j, "search_factor", c.search_factor);
    read_field(j, "roi_factor", c.roi_factor);
  } catch (const json::exception& e) {
    throw InputError(std::string("bad config field: ") + e.what());
  }
  c.validate();
  return c;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("write failed: " + path.string());
}

std::string frame_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.png", index);
  return buf;
}

}  // namespace adatrack
