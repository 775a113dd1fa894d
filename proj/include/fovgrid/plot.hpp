#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "fovgrid/geometry.hpp"
#include "fovgrid/signal.hpp"

namespace fovgrid {

using Rgb = std::array<float, 3>;

inline constexpr Rgb kBlack{0.0f, 0.0f, 0.0f};
inline constexpr Rgb kGray{0.75f, 0.75f, 0.75f};

/// Distinct line colours cycled by series index.
inline Rgb palette(std::size_t i) {
  static constexpr std::array<Rgb, 6> colors{{{0.12f, 0.47f, 0.71f},
                                              {1.0f, 0.5f, 0.05f},
                                              {0.17f, 0.63f, 0.17f},
                                              {0.84f, 0.15f, 0.16f},
                                              {0.58f, 0.4f, 0.74f},
                                              {0.55f, 0.34f, 0.29f}}};
  return colors[i % colors.size()];
}

/// Minimal raster chart: data-space axes box, points and polylines. No text.
class Plot {
 public:
  Plot(std::size_t width, std::size_t height, double x0, double x1, double y0, double y1, bool log_x = false,
       bool log_y = false)
      : img_(height, width, 3, 1.0f), log_x_(log_x), log_y_(log_y) {
    x0_ = tx(x0), x1_ = tx(x1), y0_ = ty(y0), y1_ = ty(y1);
    if (x1_ == x0_) x1_ = x0_ + 1.0;
    if (y1_ == y0_) y1_ = y0_ + 1.0;
    box();
  }

  /// Bounds padded by 5% around the data.
  static Plot fit(std::size_t width, std::size_t height, std::span<const Vec2> pts, bool log_x = false,
                  bool log_y = false, bool square = false) {
    double xa = std::numeric_limits<double>::infinity(), xb = -xa, ya = xa, yb = -xa;
    for (const auto& p : pts) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) continue;
      if ((log_x && p.x <= 0) || (log_y && p.y <= 0)) continue;
      xa = std::min(xa, p.x), xb = std::max(xb, p.x), ya = std::min(ya, p.y), yb = std::max(yb, p.y);
    }
    if (!std::isfinite(xa)) xa = 0, xb = 1, ya = 0, yb = 1;
    if (square) {
      const double m = std::max({std::abs(xa), std::abs(xb), std::abs(ya), std::abs(yb)});
      xa = ya = -m, xb = yb = m;
    }
    auto pad = [](double& a, double& b, bool lg) {
      if (lg) {
        a /= 1.1, b *= 1.1;
      } else {
        const double d = (b - a) * 0.05 + 1e-12;
        a -= d, b += d;
      }
    };
    pad(xa, xb, log_x);
    pad(ya, yb, log_y);
    return Plot(width, height, xa, xb, ya, yb, log_x, log_y);
  }

  void point(double x, double y, const Rgb& c, int radius = 1) {
    const auto [px, py] = to_px(x, y);
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx)
        if (dx * dx + dy * dy <= radius * radius) set(px + dx, py + dy, c);
  }

  void line(double xa, double ya, double xb, double yb, const Rgb& c) {
    const auto [x0, y0] = to_px(xa, ya);
    const auto [x1, y1] = to_px(xb, yb);
    const long steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0)) + 1;
    for (long s = 0; s <= steps; ++s) {
      const double t = static_cast<double>(s) / static_cast<double>(steps);
      set(std::lround(x0 + t * (x1 - x0)), std::lround(y0 + t * (y1 - y0)), c);
    }
  }

  void polyline(std::span<const Vec2> pts, const Rgb& c) {
    for (std::size_t i = 1; i < pts.size(); ++i) line(pts[i - 1].x, pts[i - 1].y, pts[i].x, pts[i].y, c);
  }

  void hline(double y, const Rgb& c) { line(inv_x(x0_), y, inv_x(x1_), y, c); }

  const Image& image() const { return img_; }

 private:
  double tx(double x) const { return log_x_ ? std::log10(std::max(x, 1e-300)) : x; }
  double ty(double y) const { return log_y_ ? std::log10(std::max(y, 1e-300)) : y; }
  double inv_x(double v) const { return log_x_ ? std::pow(10.0, v) : v; }

  std::pair<long, long> to_px(double x, double y) const {
    const double w = static_cast<double>(img_.width - 2 * kMargin);
    const double h = static_cast<double>(img_.height - 2 * kMargin);
    const double fx = (tx(x) - x0_) / (x1_ - x0_);
    const double fy = (ty(y) - y0_) / (y1_ - y0_);
    return {static_cast<long>(kMargin + std::lround(fx * w)),
            static_cast<long>(img_.height - kMargin - std::lround(fy * h))};
  }

  void set(long x, long y, const Rgb& c) {
    if (x < 0 || y < 0 || x >= static_cast<long>(img_.width) || y >= static_cast<long>(img_.height)) return;
    for (std::size_t k = 0; k < 3; ++k) img_.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), k) = c[k];
  }

  void box() {
    const long l = kMargin, r = static_cast<long>(img_.width) - kMargin;
    const long t = kMargin, b = static_cast<long>(img_.height) - kMargin;
    for (long x = l; x <= r; ++x) set(x, t, kBlack), set(x, b, kBlack);
    for (long y = t; y <= b; ++y) set(l, y, kBlack), set(r, y, kBlack);
  }

  static constexpr long kMargin = 20;
  Image img_;
  bool log_x_;
  bool log_y_;
  double x0_ = 0, x1_ = 1, y0_ = 0, y1_ = 1;
};

}  // namespace fovgrid
