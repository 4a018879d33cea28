#include "adatrack/synth.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "adatrack/errors.hpp"
#include "adatrack/image_io.hpp"

namespace adatrack {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kPerlinOctaves = 3;
constexpr int kBoxSamplesPerSide = 250;

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double grad(std::uint8_t h, double x, double y) {
  switch (h & 7) {
    case 0: return x + y;
    case 1: return x - y;
    case 2: return -x + y;
    case 3: return -x - y;
    case 4: return x;
    case 5: return -x;
    case 6: return y;
    default: return -y;
  }
}

double noise2(const std::vector<std::uint8_t>& p, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const int xi = static_cast<int>(static_cast<long long>(fx) & 255);
  const int yi = static_cast<int>(static_cast<long long>(fy) & 255);
  const double xf = x - fx, yf = y - fy;
  auto h = [&](int i, int j) { return p[(p[(i & 255)] + (j & 255)) & 255]; };
  const double u = fade(xf), v = fade(yf);
  const double n00 = grad(h(xi, yi), xf, yf);
  const double n10 = grad(h(xi + 1, yi), xf - 1, yf);
  const double n01 = grad(h(xi, yi + 1), xf, yf - 1);
  const double n11 = grad(h(xi + 1, yi + 1), xf - 1, yf - 1);
  return (1 - v) * ((1 - u) * n00 + u * n10) + v * ((1 - u) * n01 + u * n11);
}

double tps_kernel(double r2) { return r2 > 0.0 ? 0.5 * r2 * std::log(r2) : 0.0; }

}  // namespace

double perlin(const std::vector<std::uint8_t>& perm, double x, double y, double period, int octaves) {
  double acc = 0.0, amp = 1.0, norm = 0.0;
  for (int o = 0; o < octaves; ++o) {
    acc += amp * noise2(perm, x / period, y / period);
    norm += amp;
    amp *= 0.6;
    period *= 0.5;
  }
  return std::clamp(0.5 + 0.8 * acc / norm, 0.0, 1.0);
}

void SynthSpec::validate() const {
  if (frames < 2) throw InputError("synth needs at least 2 frames");
  if (size.width < 16 || size.height < 16) throw InputError("frame size must be at least 16x16");
  if (!init_box.valid()) throw InputError("invalid init box");
  if (!(motion.zoom > 0.0)) throw InputError("zoom must be positive");
  if (!(texture_scale >= 4.0)) throw InputError("texture scale must be >= 4");
  if (noise_sigma < 0.0) throw InputError("noise sigma must be >= 0");
  if (texture == TextureKind::File && texture_path.empty()) throw InputError("file texture needs a path");
  const double limit = std::min(size.width, size.height) / 8.0;
  if (deform.kind == DeformKind::Sinusoidal) {
    if (!(deform.spatial_period > 0.0) || !(deform.temporal_period > 0.0)) {
      throw InputError("deformation periods must be positive");
    }
    if (std::abs(deform.amplitude) > limit || std::abs(deform.amplitude) * 2.0 * kPi / deform.spatial_period >= 1.0) {
      throw InputError("deformation too large");
    }
  }
  if (deform.kind == DeformKind::ThinPlate) {
    if (deform.control_points < 1) throw InputError("thin-plate deformation needs control points");
    if (std::abs(deform.drift) * (frames - 1) > limit) throw InputError("deformation too large");
  }
  if (occluder) {
    if (!(occluder->size > 0.0)) throw InputError("occluder size must be positive");
  }
}

SynthSequence::SynthSequence(SynthSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::mt19937_64 rng(spec_.seed);
  perm_.resize(256);
  std::iota(perm_.begin(), perm_.end(), 0);
  for (int i = 255; i > 0; --i) {
    std::uniform_int_distribution<int> pick(0, i);
    std::swap(perm_[i], perm_[pick(rng)]);
  }
  if (spec_.texture == TextureKind::File) {
    file_texture_ = to_gray(read_png(spec_.texture_path));
  }

  // Similarities about the object's current center, composed frame by frame.
  const Point2 c0 = spec_.init_box.center();
  const double th = spec_.motion.rotation_deg * kPi / 180.0;
  const double z = spec_.motion.zoom;
  const std::array<double, 4> step{z * std::cos(th), -z * std::sin(th), z * std::sin(th), z * std::cos(th)};
  Affine a;
  for (int t = 0; t < spec_.frames; ++t) {
    if (t > 0) {
      const Point2 c = a.apply(c0);
      Affine n;
      n.m = {step[0] * a.m[0] + step[1] * a.m[2], step[0] * a.m[1] + step[1] * a.m[3],
             step[2] * a.m[0] + step[3] * a.m[2], step[2] * a.m[1] + step[3] * a.m[3]};
      const Point2 d = a.b - c;
      n.b = {step[0] * d.u + step[1] * d.v + c.u + spec_.motion.shift.u,
             step[2] * d.u + step[3] * d.v + c.v + spec_.motion.shift.v};
      a = n;
    }
    sim_.push_back(a);
    const double det = a.m[0] * a.m[3] - a.m[1] * a.m[2];
    Affine inv;
    inv.m = {a.m[3] / det, -a.m[1] / det, -a.m[2] / det, a.m[0] / det};
    inv.b = {-(inv.m[0] * a.b.u + inv.m[1] * a.b.v), -(inv.m[2] * a.b.u + inv.m[3] * a.b.v)};
    sim_inv_.push_back(inv);
  }

  if (spec_.deform.kind == DeformKind::ThinPlate) {
    const BBox& b = spec_.init_box;
    std::uniform_real_distribution<double> ux(b.x, b.right()), uy(b.y, b.bottom()), ang(0.0, 2.0 * kPi);
    for (int k = 0; k < spec_.deform.control_points; ++k) {
      ctrl_base_.push_back({ux(rng), uy(rng)});
      const double a2 = ang(rng);
      ctrl_vel_.push_back({spec_.deform.drift * std::cos(a2), spec_.deform.drift * std::sin(a2)});
    }
    // Fixed anchors well outside the box keep the far field still.
    const BBox far = BBox::centered(b.center(), 3.0 * b.w, 3.0 * b.h);
    for (const Point2 p : {Point2{far.x, far.y}, Point2{far.right(), far.y}, Point2{far.x, far.bottom()},
                           Point2{far.right(), far.bottom()}}) {
      ctrl_base_.push_back(p);
      ctrl_vel_.push_back({0.0, 0.0});
    }
    const int n = static_cast<int>(ctrl_base_.size());
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n + 3, n + 3);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const Point2 d = ctrl_base_[i] - ctrl_base_[j];
        L(i, j) = tps_kernel(d.u * d.u + d.v * d.v);
      }
      L(i, n) = 1.0;
      L(i, n + 1) = ctrl_base_[i].u;
      L(i, n + 2) = ctrl_base_[i].v;
      L(n, i) = 1.0;
      L(n + 1, i) = ctrl_base_[i].u;
      L(n + 2, i) = ctrl_base_[i].v;
    }
    const auto solver = L.fullPivLu();
    if (!solver.isInvertible()) throw InputError("degenerate thin-plate control points");
    for (int t = 0; t < spec_.frames; ++t) {
      Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + 3, 2);
      for (int i = 0; i < n; ++i) {
        rhs(i, 0) = ctrl_vel_[i].u * t;
        rhs(i, 1) = ctrl_vel_[i].v * t;
      }
      const Eigen::MatrixXd sol = solver.solve(rhs);
      Tps tp;
      tp.ctrl = ctrl_base_;
      for (int i = 0; i < n; ++i) tp.w.push_back({sol(i, 0), sol(i, 1)});
      for (int k = 0; k < 3; ++k) tp.affine[k] = {sol(n + k, 0), sol(n + k, 1)};
      tps_.push_back(std::move(tp));
    }
    // Fixed-point inversion needs a contraction.
    const Tps& last = tps_.back();
    for (double y = 0.0; y <= spec_.size.height; y += 4.0)
      for (double x = 0.0; x <= spec_.size.width; x += 4.0) {
        const Point2 r = sim_inv_.back().apply({x, y});
        double j00 = last.affine[1].u, j01 = last.affine[2].u, j10 = last.affine[1].v, j11 = last.affine[2].v;
        for (std::size_t k = 0; k < last.ctrl.size(); ++k) {
          const Point2 d = r - last.ctrl[k];
          const double r2 = d.u * d.u + d.v * d.v;
          if (r2 <= 0.0) continue;
          const double g = std::log(r2) + 1.0;
          j00 += last.w[k].u * d.u * g;
          j01 += last.w[k].u * d.v * g;
          j10 += last.w[k].v * d.u * g;
          j11 += last.w[k].v * d.v * g;
        }
        if (std::sqrt(j00 * j00 + j01 * j01 + j10 * j10 + j11 * j11) >= 0.9) {
          throw InputError("deformation too large");
        }
      }
  }
}

Point2 SynthSequence::deform(int t, Point2 r) const {
  switch (spec_.deform.kind) {
    case DeformKind::None:
      return {0.0, 0.0};
    case DeformKind::Sinusoidal: {
      const DeformSpec& d = spec_.deform;
      const double a = d.amplitude * std::sin(2.0 * kPi * t / d.temporal_period);
      const double k = 2.0 * kPi / d.spatial_period;
      return {a * std::sin(k * r.v), a * std::sin(k * r.u + kPi / 3.0)};
    }
    case DeformKind::ThinPlate: {
      const Tps& tp = tps_[t];
      Point2 out = tp.affine[0] + Point2{tp.affine[1].u * r.u + tp.affine[2].u * r.v,
                                         tp.affine[1].v * r.u + tp.affine[2].v * r.v};
      for (std::size_t k = 0; k < tp.ctrl.size(); ++k) {
        const Point2 d = r - tp.ctrl[k];
        const double u = tps_kernel(d.u * d.u + d.v * d.v);
        out.u += tp.w[k].u * u;
        out.v += tp.w[k].v * u;
      }
      return out;
    }
  }
  return {0.0, 0.0};
}

void SynthSequence::check(int t) const {
  if (t < 0 || t >= spec_.frames) throw InputError("frame index out of range");
}

Point2 SynthSequence::forward(int t, Point2 r) const {
  check(t);
  return sim_[t].apply(r + deform(t, r));
}

Point2 SynthSequence::inverse(int t, Point2 y) const {
  check(t);
  const Point2 z = sim_inv_[t].apply(y);
  if (spec_.deform.kind == DeformKind::None) return z;
  Point2 r = z;
  if (spec_.deform.kind == DeformKind::Sinusoidal) {
    // Newton on r + d(r) = z; the Jacobian is off-diagonal only.
    const DeformSpec& d = spec_.deform;
    const double a = d.amplitude * std::sin(2.0 * kPi * t / d.temporal_period);
    const double k = 2.0 * kPi / d.spatial_period;
    for (int it = 0; it < 50; ++it) {
      const double fu = r.u + a * std::sin(k * r.v) - z.u;
      const double fv = r.v + a * std::sin(k * r.u + kPi / 3.0) - z.v;
      const double b = a * k * std::cos(k * r.v);
      const double c = a * k * std::cos(k * r.u + kPi / 3.0);
      const double det = 1.0 - b * c;
      const double du = (fu - b * fv) / det;
      const double dv = (fv - c * fu) / det;
      r = {r.u - du, r.v - dv};
      if (std::max(std::abs(du), std::abs(dv)) < 1e-12) break;
    }
    return r;
  }
  for (int it = 0; it < 200; ++it) {
    const Point2 next = z - deform(t, r);
    const double step = std::max(std::abs(next.u - r.u), std::abs(next.v - r.v));
    r = next;
    if (step < 1e-12) break;
  }
  return r;
}

double SynthSequence::texture(Point2 r) const {
  switch (spec_.texture) {
    case TextureKind::Perlin:
      return perlin(perm_, r.u, r.v, spec_.texture_scale, kPerlinOctaves);
    case TextureKind::Checker: {
      const double k = 2.0 * kPi / spec_.texture_scale;
      return 0.5 + 0.4 * std::tanh(3.0 * std::sin(k * r.u)) * std::tanh(3.0 * std::sin(k * r.v));
    }
    case TextureKind::File:
      return sample_bilinear(file_texture_, r.u, r.v);
  }
  return 0.0;
}

bool SynthSequence::occluded(int t, Point2 y) const {
  if (!spec_.occluder) return false;
  const OccluderSpec& o = *spec_.occluder;
  if (t < o.entry_frame || (o.exit_frame >= 0 && t >= o.exit_frame)) return false;
  const Point2 c = o.start + Point2{o.velocity.u * (t - o.entry_frame), o.velocity.v * (t - o.entry_frame)};
  const double h = 0.5 * o.size;
  if (o.shape == SpriteShape::Square) {
    return y.u >= c.u - h && y.u < c.u + h && y.v >= c.v - h && y.v < c.v + h;
  }
  const Point2 d = y - c;
  return d.u * d.u + d.v * d.v < h * h;
}

Image SynthSequence::image(int t) const {
  check(t);
  const int W = spec_.size.width, H = spec_.size.height;
  Image img(W, H);
  const double gain = 1.0 + spec_.illumination.gain_drift * t;
  const double bias = spec_.illumination.bias_drift * t;
  std::mt19937_64 rng(spec_.seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(t + 1)));
  std::normal_distribution<double> noise(0.0, spec_.noise_sigma > 0.0 ? spec_.noise_sigma : 1.0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const Point2 p{x + 0.5, y + 0.5};
      double v = gain * texture(inverse(t, p)) + bias;
      if (spec_.noise_sigma > 0.0) v += noise(rng);
      if (occluded(t, p)) v = spec_.occluder->value;
      img.at(x, y) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  return img;
}

FlowField SynthSequence::flow_from_prev(int t) const {
  check(t);
  FlowField f(spec_.size.width, spec_.size.height);
  if (t == 0) return f;
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) {
      const Point2 p{x + 0.5, y + 0.5};
      const Point2 q = forward(t, inverse(t - 1, p));
      f.at(x, y) = {static_cast<float>(q.u - p.u), static_cast<float>(q.v - p.v)};
    }
  return f;
}

OcclusionMap SynthSequence::occlusion(int t) const {
  check(t);
  OcclusionMap o(spec_.size.width, spec_.size.height, 0);
  for (int y = 0; y < o.height(); ++y)
    for (int x = 0; x < o.width(); ++x) o.at(x, y) = occluded(t, {x + 0.5, y + 0.5}) ? 1 : 0;
  return o;
}

BBox SynthSequence::gt_box(int t) const {
  check(t);
  const BBox& b = spec_.init_box;
  std::vector<Point2> pts;
  pts.reserve(4 * kBoxSamplesPerSide);
  for (int k = 0; k < kBoxSamplesPerSide; ++k) {
    const double a = static_cast<double>(k) / kBoxSamplesPerSide;
    pts.push_back({b.x + a * b.w, b.y});
    pts.push_back({b.right(), b.y + a * b.h});
    pts.push_back({b.right() - a * b.w, b.bottom()});
    pts.push_back({b.x, b.bottom() - a * b.h});
  }
  for (Point2& p : pts) p = forward(t, inverse(0, p));
  return min_max_enclose(pts);
}

bool SynthSequence::visible(int t) const {
  const BBox b = gt_box(t);
  const int x0 = std::max(0, static_cast<int>(std::ceil(b.x - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(b.y - 0.5)));
  const int x1 = std::min(spec_.size.width, static_cast<int>(std::ceil(b.right() - 0.5)));
  const int y1 = std::min(spec_.size.height, static_cast<int>(std::ceil(b.bottom() - 0.5)));
  if (x1 <= x0 || y1 <= y0) return false;
  if (!spec_.occluder) return true;
  long covered = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) covered += occluded(t, {x + 0.5, y + 0.5});
  return static_cast<double>(covered) / (static_cast<long>(x1 - x0) * (y1 - y0)) <= 0.5;
}

SynthFrame SynthSequence::frame(int t) const {
  return {image(t), flow_from_prev(t), occlusion(t), gt_box(t), visible(t)};
}

std::vector<SynthFrame> generate(const SynthSpec& spec) {
  const SynthSequence seq(spec);
  std::vector<SynthFrame> out;
  out.reserve(spec.frames);
  for (int t = 0; t < spec.frames; ++t) out.push_back(seq.frame(t));
  return out;
}

}  // namespace adatrack
