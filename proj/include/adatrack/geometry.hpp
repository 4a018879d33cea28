#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace adatrack {

/// Continuous image coordinates: pixel (i, j) covers [i, i+1) x [j, j+1) and
/// its sample sits at the pixel center (i + 0.5, j + 0.5).
struct Point2 {
  double u = 0.0;
  double v = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.u + b.u, a.v + b.v}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.u - b.u, a.v - b.v}; }
  friend Point2 operator*(Point2 a, double s) { return {a.u * s, a.v * s}; }
  friend bool operator==(const Point2&, const Point2&) = default;
};

/// Axis-aligned box, sub-pixel. Invariant: w > 0, h > 0, all fields finite.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;
  double h = 1.0;

  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w * h; }
  Point2 center() const { return {x + 0.5 * w, y + 0.5 * h}; }
  bool valid() const;
  bool contains(Point2 p) const { return p.u >= x && p.u <= x + w && p.v >= y && p.v <= y + h; }

  static BBox from_corners(Point2 tl, Point2 br) { return {tl.u, tl.v, br.u - tl.u, br.v - tl.v}; }
  static BBox centered(Point2 c, double w, double h) { return {c.u - 0.5 * w, c.v - 0.5 * h, w, h}; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

struct Size2 {
  int width = 0;
  int height = 0;
};

/// Dense row-major image, channel-interleaved, samples nominally in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels = 1, float fill = 0.0f);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  Size2 size() const { return {width_, height_}; }
  bool empty() const { return data_.empty(); }

  float& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  float at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// Bilinear sample at continuous coordinates with border replication.
float sample_bilinear(const Image& img, double x, double y, int channel = 0);


/// Channel mean; single-channel images are returned unchanged.
Image to_gray(const Image& img);

double iou(const BBox& a, const BBox& b);

/// IoU minus the fraction of the enclosing box not covered by the union.
double giou(const BBox& a, const BBox& b);

/// Scales b about its center by `factor`, then translates it back inside
/// `bounds`. When the scaled box is wider (taller) than the bounds it is
/// clipped to the full extent along that axis.
BBox expand_box(const BBox& b, double factor, Size2 bounds);

/// Smallest axis-aligned box containing every point, floored at 1x1 px.
/// Throws InputError("no points") on an empty list.
BBox min_max_enclose(std::span<const Point2> points);

/// Resample of the region `b` onto an out_w x out_h grid.
Image crop_resample(const Image& img, const BBox& b, int out_w, int out_h);

/// Affine map between a box in frame coordinates and a resampled patch of it.
struct PatchFrame {
  BBox region;
  int width = 0;
  int height = 0;

  double scale_x() const { return width / region.w; }
  double scale_y() const { return height / region.h; }
  Point2 to_patch(Point2 p) const { return {(p.u - region.x) * scale_x(), (p.v - region.y) * scale_y()}; }
  Point2 to_frame(Point2 p) const { return {region.x + p.u / scale_x(), region.y + p.v / scale_y()}; }
  BBox to_patch(const BBox& b) const;
  BBox to_frame(const BBox& b) const;
};

}  // namespace adatrack
