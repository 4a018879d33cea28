#include "adatrack/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "adatrack/errors.hpp"

namespace adatrack {

bool BBox::valid() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h) && w > 0.0 &&
         h > 0.0;
}

Image::Image(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
  if (width <= 0 || height <= 0 || channels <= 0) {
    throw InputError("image dimensions must be positive");
  }
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

float sample_bilinear(const Image& img, double x, double y, int channel) {
  // Shift from continuous coordinates to sample-index space.
  const double fx = std::clamp(x - 0.5, 0.0, static_cast<double>(img.width() - 1));
  const double fy = std::clamp(y - 0.5, 0.0, static_cast<double>(img.height() - 1));
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double ax = fx - x0;
  const double ay = fy - y0;
  const double top = (1.0 - ax) * img.at(x0, y0, channel) + ax * img.at(x1, y0, channel);
  const double bot = (1.0 - ax) * img.at(x0, y1, channel) + ax * img.at(x1, y1, channel);
  return static_cast<float>((1.0 - ay) * top + ay * bot);
}

Image to_gray(const Image& img) {
  if (img.channels() == 1) {
    return img;
  }
  Image out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      double acc = 0.0;
      for (int c = 0; c < img.channels(); ++c) {
        acc += img.at(x, y, c);
      }
      out.at(x, y) = static_cast<float>(acc / img.channels());
    }
  }
  return out;
}

namespace {

double intersection_area(const BBox& a, const BBox& b) {
  const double w = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double h = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

}  // namespace

double iou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double giou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  const double ew = std::max(a.right(), b.right()) - std::min(a.x, b.x);
  const double eh = std::max(a.bottom(), b.bottom()) - std::min(a.y, b.y);
  const double enclosing = ew * eh;
  return inter / uni - (enclosing - uni) / enclosing;
}

BBox expand_box(const BBox& b, double factor, Size2 bounds) {
  const Point2 c = b.center();
  const double bw = bounds.width;
  const double bh = bounds.height;
  const double w = std::min(b.w * factor, bw);
  const double h = std::min(b.h * factor, bh);
  const double x = std::clamp(c.u - 0.5 * w, 0.0, bw - w);
  const double y = std::clamp(c.v - 0.5 * h, 0.0, bh - h);
  return {x, y, w, h};
}

BBox min_max_enclose(std::span<const Point2> points) {
  if (points.empty()) {
    throw InputError("no points");
  }
  double x0 = std::numeric_limits<double>::infinity();
  double y0 = x0;
  double x1 = -x0;
  double y1 = -x0;
  for (const Point2& p : points) {
    x0 = std::min(x0, p.u);
    y0 = std::min(y0, p.v);
    x1 = std::max(x1, p.u);
    y1 = std::max(y1, p.v);
  }
  return {x0, y0, std::max(x1 - x0, 1.0), std::max(y1 - y0, 1.0)};
}

Image crop_resample(const Image& img, const BBox& b, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) {
    throw InputError("output size must be at least 1x1");
  }
  Image out(out_w, out_h, img.channels());
  const double sx = b.w / out_w;
  const double sy = b.h / out_h;
  for (int j = 0; j < out_h; ++j) {
    const double y = b.y + (j + 0.5) * sy;
    for (int i = 0; i < out_w; ++i) {
      const double x = b.x + (i + 0.5) * sx;
      for (int c = 0; c < img.channels(); ++c) {
        out.at(i, j, c) = sample_bilinear(img, x, y, c);
      }
    }
  }
  return out;
}

BBox PatchFrame::to_patch(const BBox& b) const {
  const Point2 tl = to_patch(Point2{b.x, b.y});
  return {tl.u, tl.v, b.w * scale_x(), b.h * scale_y()};
}

BBox PatchFrame::to_frame(const BBox& b) const {
  const Point2 tl = to_frame(Point2{b.x, b.y});
  return {tl.u, tl.v, b.w / scale_x(), b.h / scale_y()};
}

}  // namespace adatrack
