#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "adatrack/geometry.hpp"
#include "adatrack/synth.hpp"

namespace adatrack::fixtures {

/// Static Perlin frame from the generator.
inline Image textured(std::uint64_t seed, int w = 256, int h = 256, double scale = 64.0) {
  SynthSpec s;
  s.seed = seed;
  s.size = {w, h};
  s.texture_scale = scale;
  s.init_box = {w / 4.0, h / 4.0, w / 2.0, h / 2.0};
  return SynthSequence(s).image(0);
}

/// Frames 0 and 1 of a generator sequence with the given per-frame motion.
inline std::pair<Image, Image> moving_pair(std::uint64_t seed, MotionSpec motion, int size = 256) {
  SynthSpec s;
  s.seed = seed;
  s.size = {size, size};
  s.motion = motion;
  s.init_box = BBox::centered({size / 2.0, size / 2.0}, size / 4.0, size / 4.0);
  const SynthSequence seq(s);
  return {seq.image(0), seq.image(1)};
}

/// Texture periodic in the frame size, made of random plane waves with
/// 1/|k| amplitudes up to `kmax` cycles per frame. `shift` translates it.
inline Image periodic(std::uint64_t seed, Point2 shift = {}, int size = 256, int kmax = 16) {
  struct Wave {
    int kx, ky;
    double amp, phase;
  };
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> freq(-kmax, kmax);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::vector<Wave> waves;
  double total = 0.0;
  while (waves.size() < 64) {
    const int kx = freq(rng), ky = freq(rng);
    const double k = std::hypot(kx, ky);
    if (k < 1.0 || k > kmax) continue;
    waves.push_back({kx, ky, 1.0 / k, phase(rng)});
    total += 1.0 / k;
  }
  Image img(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double v = 0.0;
      for (const Wave& w : waves)
        v += w.amp * std::sin(2.0 * std::numbers::pi * (w.kx * (x - shift.u) + w.ky * (y - shift.v)) / size + w.phase);
      img.at(x, y) = static_cast<float>(0.5 + 0.8 * v / total);
    }
  return img;
}

inline BBox random_box(std::mt19937_64& rng, double extent = 50.0) {
  std::uniform_real_distribution<double> pos(0.0, extent), len(0.5, extent / 2.0);
  return {pos(rng), pos(rng), len(rng), len(rng)};
}

inline double psnr(const Image& a, const Image& b) {
  double se = 0.0;
  for (std::size_t k = 0; k < a.data().size(); ++k) {
    const double d = a.data()[k] - b.data()[k];
    se += d * d;
  }
  const double mse = se / a.data().size();
  return mse == 0.0 ? INFINITY : 10.0 * std::log10(1.0 / mse);
}

/// Mean SSIM over 7x7 box windows whose centers lie in [x0, x1) x [y0, y1).
inline double ssim(const Image& a, const Image& b, int x0, int y0, int x1, int y1) {
  constexpr int r = 3;
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  int windows = 0;
  for (int cy = std::max(y0, r); cy < std::min(y1, a.height() - r); ++cy)
    for (int cx = std::max(x0, r); cx < std::min(x1, a.width() - r); ++cx) {
      double ma = 0, mb = 0, vaa = 0, vbb = 0, vab = 0;
      for (int y = cy - r; y <= cy + r; ++y)
        for (int x = cx - r; x <= cx + r; ++x) {
          ma += a.at(x, y);
          mb += b.at(x, y);
        }
      const double n = (2 * r + 1) * (2 * r + 1);
      ma /= n;
      mb /= n;
      for (int y = cy - r; y <= cy + r; ++y)
        for (int x = cx - r; x <= cx + r; ++x) {
          const double da = a.at(x, y) - ma, db = b.at(x, y) - mb;
          vaa += da * da;
          vbb += db * db;
          vab += da * db;
        }
      vaa /= n;
      vbb /= n;
      vab /= n;
      total += (2 * ma * mb + c1) * (2 * vab + c2) / ((ma * ma + mb * mb + c1) * (vaa + vbb + c2));
      ++windows;
    }
  return total / windows;
}

}  // namespace adatrack::fixtures
