#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "adatrack/eval.hpp"
#include "adatrack/synth.hpp"
#include "adatrack/tracker.hpp"

namespace adatrack {

/// Header of prediction CSVs.
inline constexpr const char* kPredHeader = "frame,x,y,w,h,status,occ_fraction,confidence";
/// Header of ground-truth CSVs.
inline constexpr const char* kGtHeader = "frame,x,y,w,h,visible";

/// Prediction CSV with 3-decimal numbers; Occluded rows leave the box fields
/// empty.
std::string format_pred_csv(const std::vector<TrackResult>& rows);
/// Throws InputError on a bad header, a malformed row or an empty body.
std::vector<TrackResult> parse_pred_csv(const std::string& text);

struct GtRow {
  int frame = 0;
  GtEntry entry;
};

std::string format_gt_csv(const std::vector<GtRow>& rows);
std::vector<GtRow> parse_gt_csv(const std::string& text);

/// Pairs predictions with ground truth by frame number. Every prediction
/// frame must have a GT row; GT rows without a prediction (the init frame)
/// are dropped. Throws InputError otherwise.
std::vector<GtEntry> align_gt(const std::vector<TrackResult>& pred, const std::vector<GtRow>& gt);

/// "x,y,w,h" -> BBox. Throws InputError when malformed or not positive.
BBox parse_box(const std::string& text);

/// JSON round trip of SynthSpec. Missing keys keep their defaults; unknown
/// keys are an InputError.
std::string synth_spec_to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const std::string& text);

/// Flat JSON object with TrackerConfig field names. Unknown keys are an
/// InputError.
std::string tracker_config_to_json(const TrackerConfig& config);
TrackerConfig tracker_config_from_json(const std::string& text);

/// Whole-file read; throws InputError when the file cannot be opened.
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// "000042.png".
std::string frame_name(int index);

}  // namespace adatrack
