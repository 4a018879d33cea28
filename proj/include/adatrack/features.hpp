#pragma once

#include <span>
#include <vector>

#include "adatrack/geometry.hpp"

namespace adatrack {

inline constexpr int kCellSize = 8;

/// Stride-8 dense descriptor grid. Each cell vector is L2-normalized, except
/// textureless cells which are exactly zero.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int width, int height, int channels);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  std::span<float> cell(int x, int y) { return {data_.data() + offset(x, y), static_cast<std::size_t>(channels_)}; }
  std::span<const float> cell(int x, int y) const {
    return {data_.data() + offset(x, y), static_cast<std::size_t>(channels_)};
  }
  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t offset(int x, int y) const { return (static_cast<std::size_t>(y) * width_ + x) * channels_; }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// Channel layout of an encoded cell (C = 16 + 2 * orientation_bins):
///   [0, 12)            ternary census signs, 3 scales x 4 directions
///   [12, 12 + 2*bins)  gradient-orientation histograms, 2 scales
///   last 4             local contrast: mean vs. neighbor cells, std,
///                      horizontal and vertical half-cell differences
struct FeatureLayout {
  static constexpr int kCensusScales = 3;
  static constexpr int kCensusDirections = 4;
  static constexpr int kCensusChannels = kCensusScales * kCensusDirections;
  static constexpr int kGradientScales = 2;
  static constexpr int kIntensityChannels = 4;

  int channels = 32;

  int orientation_bins() const { return (channels - kCensusChannels - kIntensityChannels) / kGradientScales; }
  int gradient_begin() const { return kCensusChannels; }
  int intensity_begin() const { return kCensusChannels + kGradientScales * orientation_bins(); }
  /// Throws InputError unless C = 16 + 2*bins with bins >= 2.
  void validate() const;
};

/// Encodes a (grayscale or multi-channel) image into ceil(W/8) x ceil(H/8)
/// cells. Throws InputError("patch too small") below 8x8.
FeatureMap encode(const Image& img, int channels = 32);

/// Dot product of two cell vectors.
float cell_dot(std::span<const float> a, std::span<const float> b);

/// Re-normalizes every cell to unit length; near-zero cells become exactly zero.
void normalize_cells(FeatureMap& fm);

}  // namespace adatrack
