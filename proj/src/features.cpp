#include "adatrack/features.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "adatrack/errors.hpp"

namespace adatrack {

namespace {

// Census comparisons closer than this are treated as ties, so flat regions
// encode to zero rather than to an arbitrary sign pattern.
constexpr float kCensusDeadZone = 1e-4f;
constexpr double kGradientEps = 1e-3;
constexpr double kIntensityEps = 0.02;
constexpr double kZeroNorm = 1e-6;

constexpr double kCensusWeight = 1.0;
constexpr double kGradientWeight = 1.0;
constexpr double kIntensityWeight = 0.5;

constexpr std::array<std::array<int, 2>, FeatureLayout::kCensusDirections> kCensusDirs{
    {{1, 0}, {0, 1}, {1, 1}, {1, -1}}};
constexpr std::array<int, FeatureLayout::kCensusScales> kCensusScales{1, 2, 4};
constexpr std::array<int, FeatureLayout::kGradientScales> kGradientSteps{1, 2};

constexpr int kPad = 4;

/// Border-replicated copy with kPad extra pixels on every side.
struct Padded {
  int stride;
  std::vector<float> v;
  Padded(const Image& g) : stride(g.width() + 2 * kPad) {
    v.resize(static_cast<std::size_t>(stride) * (g.height() + 2 * kPad));
    for (int y = -kPad; y < g.height() + kPad; ++y)
      for (int x = -kPad; x < g.width() + kPad; ++x)
        v[static_cast<std::size_t>(y + kPad) * stride + (x + kPad)] =
            g.at(std::clamp(x, 0, g.width() - 1), std::clamp(y, 0, g.height() - 1));
  }
  float operator()(int x, int y) const { return v[static_cast<std::size_t>(y + kPad) * stride + (x + kPad)]; }
};

/// atan2 in [0, 2pi) with |error| < 1e-4 rad.
double fast_angle(double y, double x) {
  const double ax = std::abs(x), ay = std::abs(y);
  const double mx = std::max(ax, ay), mn = std::min(ax, ay);
  const double a = mn / mx;
  const double s = a * a;
  double r = ((-0.0464964749 * s + 0.15931422) * s - 0.327622764) * s * a + a;
  if (ay > ax) r = 0.5 * std::numbers::pi - r;
  if (x < 0) r = std::numbers::pi - r;
  if (y < 0) r = 2.0 * std::numbers::pi - r;
  return r >= 2.0 * std::numbers::pi ? 0.0 : r;
}

void scale_group(std::span<double> v, double eps, double weight) {
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  const double s = weight / (std::sqrt(n2) + eps);
  for (double& x : v) x *= s;
}

}  // namespace

FeatureMap::FeatureMap(int width, int height, int channels)
    : width_(width), height_(height), channels_(channels) {
  if (width <= 0 || height <= 0 || channels <= 0) {
    throw InputError("feature map dimensions must be positive");
  }
  data_.assign(static_cast<std::size_t>(width) * height * channels, 0.0f);
}

void FeatureLayout::validate() const {
  const int rest = channels - kCensusChannels - kIntensityChannels;
  if (rest < 2 * kGradientScales || rest % kGradientScales != 0) {
    throw InputError("feature channels must be 16 + 2*bins with bins >= 2");
  }
}

float cell_dot(std::span<const float> a, std::span<const float> b) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void normalize_cells(FeatureMap& fm) {
  for (int y = 0; y < fm.height(); ++y) {
    for (int x = 0; x < fm.width(); ++x) {
      auto c = fm.cell(x, y);
      double n2 = 0.0;
      for (float v : c) n2 += static_cast<double>(v) * v;
      const double n = std::sqrt(n2);
      if (n < kZeroNorm) {
        std::fill(c.begin(), c.end(), 0.0f);
      } else {
        for (float& v : c) v = static_cast<float>(v / n);
      }
    }
  }
}

FeatureMap encode(const Image& img, int channels) {
  const FeatureLayout layout{channels};
  layout.validate();
  if (img.width() < kCellSize || img.height() < kCellSize) {
    throw InputError("patch too small");
  }
  const Image g = to_gray(img);
  const Padded px(g);
  const int W = g.width();
  const int H = g.height();
  const int cw = (W + kCellSize - 1) / kCellSize;
  const int ch = (H + kCellSize - 1) / kCellSize;
  const int bins = layout.orientation_bins();

  // Per-cell intensity means feed the neighbor-contrast channel.
  std::vector<double> cell_mean(static_cast<std::size_t>(cw) * ch, 0.0);
  auto cell_pixels = [&](int cx, int cy) {
    const int x0 = cx * kCellSize;
    const int y0 = cy * kCellSize;
    return std::array<int, 4>{x0, y0, std::min(x0 + kCellSize, W), std::min(y0 + kCellSize, H)};
  };
  for (int cy = 0; cy < ch; ++cy) {
    for (int cx = 0; cx < cw; ++cx) {
      const auto [x0, y0, x1, y1] = cell_pixels(cx, cy);
      double s = 0.0;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) s += g.at(x, y);
      cell_mean[static_cast<std::size_t>(cy) * cw + cx] = s / ((x1 - x0) * (y1 - y0));
    }
  }

  FeatureMap out(cw, ch, channels);
  std::vector<double> census(FeatureLayout::kCensusChannels);
  std::vector<double> grad(static_cast<std::size_t>(FeatureLayout::kGradientScales) * bins);
  std::array<double, FeatureLayout::kIntensityChannels> inten{};
  const double bin_width = 2.0 * std::numbers::pi / bins;

  for (int cy = 0; cy < ch; ++cy) {
    for (int cx = 0; cx < cw; ++cx) {
      const auto [x0, y0, x1, y1] = cell_pixels(cx, cy);
      const int npix = (x1 - x0) * (y1 - y0);
      std::fill(census.begin(), census.end(), 0.0);
      std::fill(grad.begin(), grad.end(), 0.0);
      double sum2 = 0.0;
      double left = 0.0, right = 0.0, top = 0.0, bottom = 0.0;
      const int xm = x0 + (x1 - x0) / 2;
      const int ym = y0 + (y1 - y0) / 2;

      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const float c = g.at(x, y);
          for (int s = 0; s < FeatureLayout::kCensusScales; ++s) {
            for (int d = 0; d < FeatureLayout::kCensusDirections; ++d) {
              const int step = kCensusScales[s];
              const float n = px(x + kCensusDirs[d][0] * step, y + kCensusDirs[d][1] * step);
              const float diff = n - c;
              if (diff > kCensusDeadZone) {
                census[s * FeatureLayout::kCensusDirections + d] += 1.0;
              } else if (diff < -kCensusDeadZone) {
                census[s * FeatureLayout::kCensusDirections + d] -= 1.0;
              }
            }
          }
          for (int s = 0; s < FeatureLayout::kGradientScales; ++s) {
            const int k = kGradientSteps[s];
            const double gx = (px(x + k, y) - px(x - k, y)) / (2.0 * k);
            const double gy = (px(x, y + k) - px(x, y - k)) / (2.0 * k);
            const double mag = std::sqrt(gx * gx + gy * gy);
            if (mag <= 0.0) continue;
            const double pos = fast_angle(gy, gx) / bin_width;
            const int b0 = static_cast<int>(std::floor(pos)) % bins;
            const int b1 = (b0 + 1) % bins;
            const double frac = pos - std::floor(pos);
            grad[static_cast<std::size_t>(s) * bins + b0] += mag * (1.0 - frac);
            grad[static_cast<std::size_t>(s) * bins + b1] += mag * frac;
          }
          sum2 += static_cast<double>(c) * c;
          (x < xm ? left : right) += c;
          (y < ym ? top : bottom) += c;
        }
      }

      const double mean = cell_mean[static_cast<std::size_t>(cy) * cw + cx];
      double nbr = 0.0;
      int nn = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = cx + dx;
          const int ny = cy + dy;
          if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= cw || ny >= ch) continue;
          nbr += cell_mean[static_cast<std::size_t>(ny) * cw + nx];
          ++nn;
        }
      }
      const double var = std::max(0.0, sum2 / npix - mean * mean);
      const int half_w = (x1 - x0) / 2;
      const int half_h = (y1 - y0) / 2;
      inten[0] = nn > 0 ? mean - nbr / nn : 0.0;
      inten[1] = std::sqrt(var);
      inten[2] = (half_w > 0 && x1 - xm > 0) ? right / ((x1 - xm) * (y1 - y0)) - left / (half_w * (y1 - y0)) : 0.0;
      inten[3] = (half_h > 0 && y1 - ym > 0) ? bottom / ((y1 - ym) * (x1 - x0)) - top / (half_h * (x1 - x0)) : 0.0;

      for (double& v : census) v /= npix;
      for (double& v : grad) v /= npix;
      for (double& v : census) v *= kCensusWeight / std::sqrt(static_cast<double>(census.size()));
      scale_group(grad, kGradientEps, kGradientWeight);
      scale_group(inten, kIntensityEps, kIntensityWeight);

      auto cell = out.cell(cx, cy);
      std::size_t k = 0;
      for (double v : census) cell[k++] = static_cast<float>(v);
      for (double v : grad) cell[k++] = static_cast<float>(v);
      for (double v : inten) cell[k++] = static_cast<float>(v);
    }
  }
  normalize_cells(out);
  return out;
}

}  // namespace adatrack
