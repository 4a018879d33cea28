#include "adatrack/flow.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>

namespace adatrack {

FlowField::FlowField(int width, int height, Flow2 fill) : vec_(width, height, fill), valid_(width, height, 1) {}

Flow2 FlowField::sample(double x, double y) const {
  const double fx = std::clamp(x - 0.5, 0.0, static_cast<double>(width() - 1));
  const double fy = std::clamp(y - 0.5, 0.0, static_cast<double>(height() - 1));
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const int x1 = std::min(x0 + 1, width() - 1);
  const int y1 = std::min(y0 + 1, height() - 1);
  const double ax = fx - x0;
  const double ay = fy - y0;
  const Flow2 a = at(x0, y0), b = at(x1, y0), c = at(x0, y1), d = at(x1, y1);
  const double u = (1 - ay) * ((1 - ax) * a.u + ax * b.u) + ay * ((1 - ax) * c.u + ax * d.u);
  const double v = (1 - ay) * ((1 - ax) * a.v + ax * b.v) + ay * ((1 - ax) * c.v + ax * d.v);
  return {static_cast<float>(u), static_cast<float>(v)};
}

CostVolume build_cost_volume(const FeatureMap& src, const FeatureMap& dst, int levels) {
  if (src.channels() != dst.channels()) {
    throw InputError("cost volume channel mismatch");
  }
  if (levels < 1) {
    throw InputError("cost volume needs at least one level");
  }
  CostVolume cv;
  cv.sw_ = src.width();
  cv.sh_ = src.height();
  const std::size_t nsrc = static_cast<std::size_t>(cv.sw_) * cv.sh_;
  cv.dims_.push_back(Size2{dst.width(), dst.height()});
  std::vector<float> base(nsrc * dst.width() * dst.height());
  std::size_t k = 0;
  for (int j = 0; j < src.height(); ++j)
    for (int i = 0; i < src.width(); ++i) {
      const auto a = src.cell(i, j);
      for (int l = 0; l < dst.height(); ++l)
        for (int m = 0; m < dst.width(); ++m) base[k++] = cell_dot(a, dst.cell(m, l));
    }
  cv.levels_.push_back(std::move(base));

  for (int lv = 1; lv < levels; ++lv) {
    const Size2 prev = cv.dims_.back();
    const Size2 cur{std::max(1, prev.width / 2), std::max(1, prev.height / 2)};
    const auto& p = cv.levels_.back();
    std::vector<float> pooled(nsrc * cur.width * cur.height);
    const std::size_t pstride = static_cast<std::size_t>(prev.width) * prev.height;
    const std::size_t cstride = static_cast<std::size_t>(cur.width) * cur.height;
    for (std::size_t s = 0; s < nsrc; ++s) {
      for (int l = 0; l < cur.height; ++l) {
        for (int m = 0; m < cur.width; ++m) {
          float acc = 0.0f;
          int n = 0;
          for (int dl = 0; dl < 2; ++dl)
            for (int dm = 0; dm < 2; ++dm) {
              const int pl = 2 * l + dl;
              const int pm = 2 * m + dm;
              if (pl < prev.height && pm < prev.width) {
                acc += p[s * pstride + static_cast<std::size_t>(pl) * prev.width + pm];
                ++n;
              }
            }
          pooled[s * cstride + static_cast<std::size_t>(l) * cur.width + m] = acc / n;
        }
      }
    }
    cv.dims_.push_back(cur);
    cv.levels_.push_back(std::move(pooled));
  }
  return cv;
}

namespace {

constexpr double kInvalidScore = -std::numeric_limits<double>::infinity();

Image downsample(const Image& g) {
  // Each output sample covers input pixels 2j and 2j+1; [1 3 3 1] / 8 keeps
  // the continuous coordinate frames of both levels aligned.
  const int W = g.width(), H = g.height();
  const int w = std::max(1, (W + 1) / 2), h = std::max(1, (H + 1) / 2);
  auto rd = [](const Image& im, int x, int y) {
    return im.at(std::clamp(x, 0, im.width() - 1), std::clamp(y, 0, im.height() - 1));
  };
  Image tmp(w, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < w; ++x)
      tmp.at(x, y) = (rd(g, 2 * x - 1, y) + 3.0f * rd(g, 2 * x, y) + 3.0f * rd(g, 2 * x + 1, y) +
                      rd(g, 2 * x + 2, y)) / 8.0f;
  Image out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.at(x, y) = (rd(tmp, x, 2 * y - 1) + 3.0f * rd(tmp, x, 2 * y) + 3.0f * rd(tmp, x, 2 * y + 1) +
                      rd(tmp, x, 2 * y + 2)) / 8.0f;
  return out;
}

FlowField upsample_flow(const FlowField& coarse, int width, int height) {
  FlowField out(width, height);
  const double sx = static_cast<double>(coarse.width()) / width;
  const double sy = static_cast<double>(coarse.height()) / height;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const Flow2 f = coarse.sample((x + 0.5) * sx, (y + 0.5) * sy);
      out.at(x, y) = {static_cast<float>(f.u / sx), static_cast<float>(f.v / sy)};
    }
  return out;
}

Image gradient(const Image& g, bool along_x) {
  Image out(g.width(), g.height());
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) {
      if (along_x) {
        const int a = std::max(x - 1, 0), b = std::min(x + 1, g.width() - 1);
        out.at(x, y) = (g.at(b, y) - g.at(a, y)) / static_cast<float>(std::max(b - a, 1));
      } else {
        const int a = std::max(y - 1, 0), b = std::min(y + 1, g.height() - 1);
        out.at(x, y) = (g.at(x, b) - g.at(x, a)) / static_cast<float>(std::max(b - a, 1));
      }
    }
  return out;
}

/// Summed-area table with clipped box queries.
class BoxSum {
 public:
  BoxSum(int w, int h) : w_(w), h_(h), s_(static_cast<std::size_t>(w + 1) * (h + 1), 0.0) {}
  template <class F>
  void build(F&& value) {
    for (int y = 0; y < h_; ++y) {
      double row = 0.0;
      for (int x = 0; x < w_; ++x) {
        row += value(x, y);
        s_[idx(x + 1, y + 1)] = s_[idx(x + 1, y)] + row;
      }
    }
  }
  double box(int x, int y, int r) const {
    const int x0 = std::max(x - r, 0), y0 = std::max(y - r, 0);
    const int x1 = std::min(x + r + 1, w_), y1 = std::min(y + r + 1, h_);
    return s_[idx(x1, y1)] - s_[idx(x0, y1)] - s_[idx(x1, y0)] + s_[idx(x0, y0)];
  }
  static int count(int x, int y, int r, int w, int h) {
    return (std::min(x + r + 1, w) - std::max(x - r, 0)) * (std::min(y + r + 1, h) - std::max(y - r, 0));
  }

 private:
  std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * (w_ + 1) + x; }
  int w_, h_;
  std::vector<double> s_;
};

/// Bilinear read of an integer-indexed correlation accessor at fractional
/// target position; nullopt outside the target grid.
template <class Corr>
double corr_bilinear(const Corr& corr, int i, int j, double k, double l, int tw, int th) {
  if (k < 0.0 || l < 0.0 || k > tw - 1 || l > th - 1) return kInvalidScore;
  const int k0 = std::min(static_cast<int>(k), tw - 1);
  const int l0 = std::min(static_cast<int>(l), th - 1);
  const int k1 = std::min(k0 + 1, tw - 1);
  const int l1 = std::min(l0 + 1, th - 1);
  const double ak = k - k0, al = l - l0;
  const double top = (1 - ak) * corr(i, j, k0, l0) + ak * corr(i, j, k1, l0);
  const double bot = (1 - ak) * corr(i, j, k0, l1) + ak * corr(i, j, k1, l1);
  return (1 - al) * top + al * bot;
}

/// Mean correlation of the 3x3 source-cell neighborhood under a common
/// displacement. Single cells are too ambiguous on smooth texture.
template <class Corr>
class Aggregated {
 public:
  Aggregated(const Corr& corr, int sw, int sh, int tw, int th) : corr_(corr), sw_(sw), sh_(sh), tw_(tw), th_(th) {}
  double operator()(int i, int j, int k, int l) const {
    double acc = 0.0;
    int n = 0;
    for (int dj = -1; dj <= 1; ++dj)
      for (int di = -1; di <= 1; ++di) {
        const int si = i + di, sj = j + dj, tk = k + di, tl = l + dj;
        if (si < 0 || sj < 0 || si >= sw_ || sj >= sh_ || tk < 0 || tl < 0 || tk >= tw_ || tl >= th_) continue;
        acc += corr_(si, sj, tk, tl);
        ++n;
      }
    return n > 0 ? acc / n : -1.0;
  }

 private:
  const Corr& corr_;
  int sw_, sh_, tw_, th_;
};

struct WindowPeak {
  int best_dx = 0;
  int best_dy = 0;
  double best = kInvalidScore;
  double runner_up = kInvalidScore;
};

template <class Corr>
WindowPeak scan_window(const Corr& corr, int i, int j, double px, double py, int r, int tw, int th,
                       std::vector<double>& scores) {
  const int side = 2 * r + 1;
  scores.assign(static_cast<std::size_t>(side) * side, kInvalidScore);
  WindowPeak wp;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const double s = corr_bilinear(corr, i, j, px + dx, py + dy, tw, th);
      scores[static_cast<std::size_t>(dy + r) * side + (dx + r)] = s;
      // Strict comparison keeps the window center on ties.
      if (s > wp.best || (s == wp.best && dx == 0 && dy == 0)) {
        wp.best = s;
        wp.best_dx = dx;
        wp.best_dy = dy;
      }
    }
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      if (std::abs(dx - wp.best_dx) < 2 && std::abs(dy - wp.best_dy) < 2) continue;
      wp.runner_up = std::max(wp.runner_up, scores[static_cast<std::size_t>(dy + r) * side + (dx + r)]);
    }
  return wp;
}

/// Soft-argmax over the 3x3 neighborhood of the window peak, relative to it.
std::pair<double, double> local_soft_argmax(const std::vector<double>& scores, const WindowPeak& wp, int r,
                                            double tau) {
  const int side = 2 * r + 1;
  double sw = 0.0, su = 0.0, sv = 0.0;
  for (int oy = -1; oy <= 1; ++oy)
    for (int ox = -1; ox <= 1; ++ox) {
      const int dx = wp.best_dx + ox, dy = wp.best_dy + oy;
      if (std::abs(dx) > r || std::abs(dy) > r) continue;
      const double s = scores[static_cast<std::size_t>(dy + r) * side + (dx + r)];
      if (s == kInvalidScore) continue;
      const double w = std::exp((s - wp.best) / tau);
      sw += w;
      su += w * ox;
      sv += w * oy;
    }
  return {su / sw, sv / sw};
}

float weighted_median(std::vector<std::pair<float, double>>& vals) {
  std::sort(vals.begin(), vals.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double total = 0.0;
  for (const auto& v : vals) total += v.second;
  double acc = 0.0;
  for (const auto& v : vals) {
    acc += v.second;
    if (acc >= 0.5 * total) return v.first;
  }
  return vals.back().first;
}

Flow2 cell_grid_sample(const Grid<Flow2>& g, double ci, double cj) {
  const double fx = std::clamp(ci, 0.0, static_cast<double>(g.width() - 1));
  const double fy = std::clamp(cj, 0.0, static_cast<double>(g.height() - 1));
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const int x1 = std::min(x0 + 1, g.width() - 1), y1 = std::min(y0 + 1, g.height() - 1);
  const double ax = fx - x0, ay = fy - y0;
  const Flow2 a = g.at(x0, y0), b = g.at(x1, y0), c = g.at(x0, y1), d = g.at(x1, y1);
  return {static_cast<float>((1 - ay) * ((1 - ax) * a.u + ax * b.u) + ay * ((1 - ax) * c.u + ax * d.u)),
          static_cast<float>((1 - ay) * ((1 - ax) * a.v + ax * b.v) + ay * ((1 - ax) * c.v + ax * d.v))};
}

/// Iterative lookup refinement of cell-level flow, followed by one weighted
/// median pass. The resulting per-cell change is added to `pix`.
template <class Corr>
void cell_lookup_stage(const Corr& raw, int sw, int sh, int tw, int th, FlowField& pix, const FlowParams& p,
                       int iters) {
  const Aggregated<Corr> corr(raw, sw, sh, tw, th);
  const Grid<Flow2> init(sw, sh);
  Grid<Flow2> cur = init;
  const int r = p.lookup_radius;
  std::vector<double> scores;
  for (int it = 0; it < iters; ++it) {
    bool moved = false;
    for (int j = 0; j < sh; ++j)
      for (int i = 0; i < sw; ++i) {
        Flow2& f = cur.at(i, j);
        const double px = i + f.u, py = j + f.v;
        const WindowPeak wp = scan_window(corr, i, j, px, py, r, tw, th, scores);
        if (wp.best == kInvalidScore || (wp.best_dx == 0 && wp.best_dy == 0)) continue;
        const double here = scores[static_cast<std::size_t>(r) * (2 * r + 1) + r];
        if (wp.best - here < p.min_move_gain) continue;
        const auto [ou, ov] = local_soft_argmax(scores, wp, r, p.softmax_temperature);
        f.u = static_cast<float>(f.u + wp.best_dx + ou);
        f.v = static_cast<float>(f.v + wp.best_dy + ov);
        moved = true;
      }
    if (!moved) break;
  }

  Grid<double> weight(sw, sh, 0.01);
  for (int j = 0; j < sh; ++j)
    for (int i = 0; i < sw; ++i) {
      const double s = corr_bilinear(corr, i, j, i + cur.at(i, j).u, j + cur.at(i, j).v, tw, th);
      weight.at(i, j) = std::max(0.01, s);
    }
  Grid<Flow2> smooth(sw, sh);
  std::vector<std::pair<float, double>> us, vs;
  for (int j = 0; j < sh; ++j)
    for (int i = 0; i < sw; ++i) {
      us.clear();
      vs.clear();
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di) {
          const int x = i + di, y = j + dj;
          if (x < 0 || y < 0 || x >= sw || y >= sh) continue;
          us.emplace_back(cur.at(x, y).u, weight.at(x, y));
          vs.emplace_back(cur.at(x, y).v, weight.at(x, y));
        }
      smooth.at(i, j) = {weighted_median(us), weighted_median(vs)};
    }

  Grid<Flow2> delta(sw, sh);
  bool any = false;
  for (int j = 0; j < sh; ++j)
    for (int i = 0; i < sw; ++i) {
      const Flow2 d{(smooth.at(i, j).u - init.at(i, j).u) * kCellSize,
                    (smooth.at(i, j).v - init.at(i, j).v) * kCellSize};
      delta.at(i, j) = d;
      any = any || d.u != 0.0f || d.v != 0.0f;
    }
  if (!any) return;
  for (int y = 0; y < pix.height(); ++y)
    for (int x = 0; x < pix.width(); ++x) {
      const Flow2 d = cell_grid_sample(delta, (x + 0.5) / kCellSize - 0.5, (y + 0.5) / kCellSize - 0.5);
      pix.at(x, y).u += d.u;
      pix.at(x, y).v += d.v;
    }
}

/// Windowed Gauss-Newton refinement of a dense field on one pyramid level.
void photometric_refine(const Image& S, const Image& D, FlowField& F, const FlowParams& p) {
  const int W = S.width(), H = S.height();
  const Image Sx = gradient(S, true), Sy = gradient(S, false);
  const Image Dx = gradient(D, true), Dy = gradient(D, false);
  std::vector<float> gx(static_cast<std::size_t>(W) * H), gy(gx.size()), rr(gx.size());
  BoxSum sxx(W, H), sxy(W, H), syy(W, H), sxr(W, H), syr(W, H), sw(W, H), swu(W, H), swv(W, H);
  const int R = p.refine_radius;
  constexpr double kMaxStep = 2.0;
  constexpr double kPrior = 1e-6;
  constexpr double kFlatWeight = 1e-8;
  for (int it = 0; it < p.refine_iters; ++it) {
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const Flow2 f = F.at(x, y);
        const double tx = x + 0.5 + f.u, ty = y + 0.5 + f.v;
        const std::size_t k = static_cast<std::size_t>(y) * W + x;
        gx[k] = 0.5f * (Sx.at(x, y) + sample_bilinear(Dx, tx, ty));
        gy[k] = 0.5f * (Sy.at(x, y) + sample_bilinear(Dy, tx, ty));
        rr[k] = sample_bilinear(D, tx, ty) - S.at(x, y);
      }
    auto at = [W](const std::vector<float>& v, int x, int y) { return static_cast<double>(v[static_cast<std::size_t>(y) * W + x]); };
    sxx.build([&](int x, int y) { return at(gx, x, y) * at(gx, x, y); });
    sxy.build([&](int x, int y) { return at(gx, x, y) * at(gy, x, y); });
    syy.build([&](int x, int y) { return at(gy, x, y) * at(gy, x, y); });
    // Each neighbor's residual is linearized around its own flow, so the
    // window solve yields the new flow at the center directly.
    auto lin = [&](int x, int y) {
      const Flow2 f = F.at(x, y);
      return at(gx, x, y) * f.u + at(gy, x, y) * f.v - at(rr, x, y);
    };
    sxr.build([&](int x, int y) { return at(gx, x, y) * lin(x, y); });
    syr.build([&](int x, int y) { return at(gy, x, y) * lin(x, y); });
    // Weak pull toward the structure-weighted local mean flow, so textureless
    // pixels inherit motion from textured neighbors instead of keeping their start.
    auto weight = [&](int x, int y) { return at(gx, x, y) * at(gx, x, y) + at(gy, x, y) * at(gy, x, y) + kFlatWeight; };
    sw.build(weight);
    swu.build([&](int x, int y) { return weight(x, y) * F.at(x, y).u; });
    swv.build([&](int x, int y) { return weight(x, y) * F.at(x, y).v; });
    double max_step = 0.0;
    FlowField next = F;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double n = BoxSum::count(x, y, R, W, H);
        const double wsum = sw.box(x, y, R);
        const double mu = swu.box(x, y, R) / wsum, mv = swv.box(x, y, R) / wsum;
        const double a = sxx.box(x, y, R) + kPrior * n;
        const double b = sxy.box(x, y, R);
        const double c = syy.box(x, y, R) + kPrior * n;
        const double bx = sxr.box(x, y, R) + kPrior * n * mu, by = syr.box(x, y, R) + kPrior * n * mv;
        const double det = a * c - b * b;
        const Flow2 f = F.at(x, y);
        const double du = std::clamp((c * bx - b * by) / det - f.u, -kMaxStep, kMaxStep);
        const double dv = std::clamp((a * by - b * bx) / det - f.v, -kMaxStep, kMaxStep);
        Flow2& g = next.at(x, y);
        g.u = static_cast<float>(std::clamp(f.u + du, -static_cast<double>(W), static_cast<double>(W)));
        g.v = static_cast<float>(std::clamp(f.v + dv, -static_cast<double>(H), static_cast<double>(H)));
        max_step = std::max({max_step, std::abs(du), std::abs(dv)});
      }
    F = std::move(next);
    if (max_step < 1e-3) break;
  }
}

/// Replaces vectors of `a` by those of `b` wherever `b` has the lower
/// box-summed squared residual.
void select_lower_residual(const Image& S, const Image& D, FlowField& a, const FlowField& b, int radius) {
  const int W = S.width(), H = S.height();
  auto residual = [&](const FlowField& f) {
    BoxSum sum(W, H);
    sum.build([&](int x, int y) {
      const Flow2 v = f.at(x, y);
      const double r = sample_bilinear(D, x + 0.5 + v.u, y + 0.5 + v.v) - S.at(x, y);
      return r * r;
    });
    return sum;
  };
  const BoxSum ra = residual(a), rb = residual(b);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (rb.box(x, y, radius) < ra.box(x, y, radius)) a.at(x, y) = b.at(x, y);
}

/// Marks vectors whose target leaves the frame or whose local appearance
/// does not correlate with the source window.
void mark_validity(const Image& S, const Image& D, FlowField& F, const FlowParams& p) {
  const int W = S.width(), H = S.height();
  std::vector<float> warped(static_cast<std::size_t>(W) * H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const Flow2 f = F.at(x, y);
      warped[static_cast<std::size_t>(y) * W + x] = sample_bilinear(D, x + 0.5 + f.u, y + 0.5 + f.v);
    }
  auto wv = [&](int x, int y) { return static_cast<double>(warped[static_cast<std::size_t>(y) * W + x]); };
  auto sv = [&](int x, int y) { return static_cast<double>(S.at(x, y)); };
  BoxSum s1(W, H), s2(W, H), w1(W, H), w2(W, H), sw(W, H);
  s1.build(sv);
  s2.build([&](int x, int y) { return sv(x, y) * sv(x, y); });
  w1.build(wv);
  w2.build([&](int x, int y) { return wv(x, y) * wv(x, y); });
  sw.build([&](int x, int y) { return sv(x, y) * wv(x, y); });
  const int R = p.ncc_radius;
  const double flat_var = p.flat_std * p.flat_std;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const Flow2 f = F.at(x, y);
      if (!F.inside(x + 0.5 + f.u, y + 0.5 + f.v)) {
        F.set_valid(x, y, false);
        continue;
      }
      const double n = BoxSum::count(x, y, R, W, H);
      const double ms = s1.box(x, y, R) / n, mw = w1.box(x, y, R) / n;
      const double vs = std::max(0.0, s2.box(x, y, R) / n - ms * ms);
      const double vw = std::max(0.0, w2.box(x, y, R) / n - mw * mw);
      const bool flat_s = vs < flat_var, flat_w = vw < flat_var;
      bool ok;
      if (flat_s && flat_w) {
        ok = std::abs(ms - mw) < 4.0 * p.flat_std + 0.05;
      } else if (flat_s != flat_w) {
        ok = false;
      } else {
        const double cov = sw.box(x, y, R) / n - ms * mw;
        ok = cov / std::sqrt(vs * vw) >= p.ncc_min;
      }
      F.set_valid(x, y, ok);
    }
}

ConfidenceMap confidence_from(const FlowField& fwd, const FlowField& bwd, const Grid<float>& peak, double sigma_c) {
  ConfidenceMap conf(fwd.width(), fwd.height(), 0.0f);
  const double s2 = sigma_c * sigma_c;
  for (int y = 0; y < fwd.height(); ++y)
    for (int x = 0; x < fwd.width(); ++x) {
      if (!fwd.valid(x, y)) continue;
      const Flow2 f = fwd.at(x, y);
      const Flow2 b = bwd.sample(x + 0.5 + f.u, y + 0.5 + f.v);
      const double ru = f.u + b.u, rv = f.v + b.v;
      // Peak term is defined per cell; interpolate between cell centers.
      const double ci = std::clamp((x + 0.5) / kCellSize - 0.5, 0.0, peak.width() - 1.0);
      const double cj = std::clamp((y + 0.5) / kCellSize - 0.5, 0.0, peak.height() - 1.0);
      const int i0 = static_cast<int>(ci), j0 = static_cast<int>(cj);
      const int i1 = std::min(i0 + 1, peak.width() - 1), j1 = std::min(j0 + 1, peak.height() - 1);
      const double ai = ci - i0, aj = cj - j0;
      const double pk = (1 - aj) * ((1 - ai) * peak.at(i0, j0) + ai * peak.at(i1, j0)) +
                        aj * ((1 - ai) * peak.at(i0, j1) + ai * peak.at(i1, j1));
      conf.at(x, y) = static_cast<float>(std::clamp(std::exp(-(ru * ru + rv * rv) / s2) * pk, 0.0, 1.0));
    }
  return conf;
}

template <class Corr>
Grid<float> peak_terms(const Corr& raw, int sw, int sh, int tw, int th, const FlowParams& p) {
  const Aggregated<Corr> corr(raw, sw, sh, tw, th);
  Grid<float> out(sw, sh, 0.0f);
  std::vector<double> scores;
  for (int j = 0; j < sh; ++j)
    for (int i = 0; i < sw; ++i) {
      const WindowPeak wp = scan_window(corr, i, j, i, j, p.lookup_radius, tw, th, scores);
      if (wp.best == kInvalidScore) continue;
      const double second = wp.runner_up == kInvalidScore ? -1.0 : wp.runner_up;
      out.at(i, j) = static_cast<float>(std::clamp((wp.best - second) / p.peak_margin, 0.0, 1.0));
    }
  return out;
}

/// dst pulled back onto the source grid along `flow`.
Image warp_by(const Image& dst, const FlowField& flow) {
  Image out(dst.width(), dst.height());
  for (int y = 0; y < dst.height(); ++y)
    for (int x = 0; x < dst.width(); ++x) {
      const Flow2 f = flow.at(x, y);
      out.at(x, y) = sample_bilinear(dst, x + 0.5 + f.u, y + 0.5 + f.v);
    }
  return out;
}

/// Correlation of src cells against the warped dst, restricted to the band
/// of target cells any lookup window can touch.
class ResidualVolume {
 public:
  ResidualVolume(const FeatureMap& src, const FeatureMap& dst, int reach)
      : sw_(src.width()), sh_(src.height()), tw_(dst.width()), th_(dst.height()), reach_(reach),
        side_(2 * reach + 1), band_(static_cast<std::size_t>(sw_) * sh_ * side_ * side_, 0.0f) {
    if (src.channels() != dst.channels()) throw InputError("cost volume channel mismatch");
    for (int j = 0; j < sh_; ++j)
      for (int i = 0; i < sw_; ++i) {
        const auto a = src.cell(i, j);
        float* out = &band_[(static_cast<std::size_t>(j) * sw_ + i) * side_ * side_];
        for (int dl = -reach; dl <= reach; ++dl)
          for (int dk = -reach; dk <= reach; ++dk) {
            const int k = i + dk, l = j + dl;
            if (k < 0 || l < 0 || k >= tw_ || l >= th_) continue;
            out[(dl + reach) * side_ + (dk + reach)] = cell_dot(a, dst.cell(k, l));
          }
      }
  }
  int src_width() const { return sw_; }
  int src_height() const { return sh_; }
  int dst_width() const { return tw_; }
  int dst_height() const { return th_; }
  double operator()(int i, int j, int k, int l) const {
    const int dk = k - i, dl = l - j;
    // Unreachable targets score as the worst possible correlation.
    if (dk < -reach_ || dk > reach_ || dl < -reach_ || dl > reach_) return -1.0;
    return band_[(static_cast<std::size_t>(j) * sw_ + i) * side_ * side_ + (dl + reach_) * side_ + (dk + reach_)];
  }

 private:
  int sw_, sh_, tw_, th_, reach_, side_;
  std::vector<float> band_;
};

ResidualVolume residual_volume(const FeatureMap& fs, const Image& D, const FlowField& flow, const FlowParams& p) {
  // Lookups start at the cell itself, so a window plus one bilinear
  // neighbor bounds every access.
  return ResidualVolume(fs, encode(warp_by(D, flow), p.feature_channels), p.lookup_radius + 1);
}

}  // namespace

BidirectionalFlow CorrelationFlow::estimate(const Image& src_in, const Image& dst_in, int iters) const {
  if (src_in.width() != dst_in.width() || src_in.height() != dst_in.height()) {
    throw InputError("flow input size mismatch");
  }
  if (iters < 1) {
    throw InputError("flow iterations must be >= 1");
  }
  const FlowParams& p = params_;
  std::vector<Image> ps{to_gray(src_in)}, pd{to_gray(dst_in)};
  while (static_cast<int>(ps.size()) < p.pyramid_levels && ps.back().width() >= 4 * kCellSize &&
         ps.back().height() >= 4 * kCellSize) {
    ps.push_back(downsample(ps.back()));
    pd.push_back(downsample(pd.back()));
  }

  FlowField fwd, bwd;
  FeatureMap fs, fd;
  auto run_level = [&](const Image& S, const FeatureMap& fsrc, const Image& D, FlowField f) {
    const ResidualVolume cv = residual_volume(fsrc, D, f, p);
    cell_lookup_stage(cv, cv.src_width(), cv.src_height(), cv.dst_width(), cv.dst_height(), f, p, iters);
    photometric_refine(S, D, f, p);
    return f;
  };
  // Finer levels also start from zero motion and keep, per pixel, whichever
  // start ends with the lower local residual; a half-cell coarse error is
  // otherwise unrecoverable.
  auto run = [&](const Image& S, const FeatureMap& fsrc, const Image& D, const FlowField& coarse) {
    if (coarse.empty()) return run_level(S, fsrc, D, FlowField(S.width(), S.height()));
    FlowField a = run_level(S, fsrc, D, upsample_flow(coarse, S.width(), S.height()));
    const FlowField b = run_level(S, fsrc, D, FlowField(S.width(), S.height()));
    select_lower_residual(S, D, a, b, p.ncc_radius);
    return a;
  };
  for (int lv = static_cast<int>(ps.size()) - 1; lv >= 0; --lv) {
    fs = encode(ps[lv], p.feature_channels);
    fd = encode(pd[lv], p.feature_channels);
    fwd = run(ps[lv], fs, pd[lv], fwd);
    bwd = run(pd[lv], fd, ps[lv], bwd);
  }
  const ResidualVolume cf = residual_volume(fs, pd[0], fwd, p);
  const ResidualVolume cb = residual_volume(fd, ps[0], bwd, p);
  const Grid<float> peak_f = peak_terms(cf, cf.src_width(), cf.src_height(), cf.dst_width(), cf.dst_height(), p);
  const Grid<float> peak_b = peak_terms(cb, cb.src_width(), cb.src_height(), cb.dst_width(), cb.dst_height(), p);
  mark_validity(ps[0], pd[0], fwd, p);
  mark_validity(pd[0], ps[0], bwd, p);

  BidirectionalFlow out;
  out.forward.confidence = confidence_from(fwd, bwd, peak_f, p.sigma_c);
  out.backward.confidence = confidence_from(bwd, fwd, peak_b, p.sigma_c);
  out.forward.flow = std::move(fwd);
  out.backward.flow = std::move(bwd);
  return out;
}

FlowEstimate estimate_flow(const Image& src, const Image& dst, int iters, const FlowParams& params) {
  return CorrelationFlow(params).estimate(src, dst, iters).forward;
}

FlowField compose_flow(const FlowField& g_prev, const FlowField& v) {
  if (g_prev.width() != v.width() || g_prev.height() != v.height()) {
    throw InputError("flow extent mismatch");
  }
  return compose_flow_with(g_prev, [&v](Point2 p) -> std::optional<Flow2> {
    if (!v.inside(p.u, p.v)) return std::nullopt;
    if (!v.valid(static_cast<int>(p.u), static_cast<int>(p.v))) return std::nullopt;
    return v.sample(p.u, p.v);
  });
}

OcclusionMap fb_occlusion(const FlowField& fwd, const FlowField& bwd, ConsistencyParams params) {
  if (fwd.width() != bwd.width() || fwd.height() != bwd.height()) {
    throw InputError("flow extent mismatch");
  }
  OcclusionMap occ(fwd.width(), fwd.height(), 0);
  for (int y = 0; y < fwd.height(); ++y)
    for (int x = 0; x < fwd.width(); ++x) {
      const Flow2 f = fwd.at(x, y);
      const double tx = x + 0.5 + f.u, ty = y + 0.5 + f.v;
      if (!fwd.inside(tx, ty) || !fwd.valid(x, y)) {
        occ.at(x, y) = 1;
        continue;
      }
      const Flow2 b = bwd.sample(tx, ty);
      const double ru = static_cast<double>(f.u) + b.u, rv = static_cast<double>(f.v) + b.v;
      const double lhs = ru * ru + rv * rv;
      const double rhs = params.a * (static_cast<double>(f.u) * f.u + static_cast<double>(f.v) * f.v +
                                     static_cast<double>(b.u) * b.u + static_cast<double>(b.v) * b.v) +
                         params.b;
      occ.at(x, y) = lhs > rhs ? 1 : 0;
    }
  return occ;
}

double occlusion_fraction(const OcclusionMap& o, const BBox& b) {
  // Pixel (i, j) is inside b when its center lies in [x, x+w) x [y, y+h).
  const int x0 = std::max(0, static_cast<int>(std::ceil(b.x - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(b.y - 0.5)));
  const int x1 = std::min(o.width(), static_cast<int>(std::ceil(b.right() - 0.5)));
  const int y1 = std::min(o.height(), static_cast<int>(std::ceil(b.bottom() - 0.5)));
  if (x1 <= x0 || y1 <= y0) {
    throw InputError("box does not intersect the occlusion map");
  }
  long flagged = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) flagged += o.at(x, y) != 0;
  return static_cast<double>(flagged) / (static_cast<long>(x1 - x0) * (y1 - y0));
}

}  // namespace adatrack
