#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace fovgrid {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

/// Eigen-decomposition of a weighted 2x2 scatter matrix about the weighted mean.
struct Scatter2 {
  double lambda1 = 0.0;  // larger
  double lambda2 = 0.0;
  double orientation = 0.0;  // principal axis angle in [0, pi)
  Vec2 mean;
};

inline Scatter2 scatter(std::span<const Vec2> pts, std::span<const double> weights = {}) {
  Scatter2 s;
  double wsum = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    s.mean.x += w * pts[i].x;
    s.mean.y += w * pts[i].y;
    wsum += w;
  }
  if (!(wsum > 0.0)) return s;
  s.mean.x /= wsum;
  s.mean.y /= wsum;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    const double dx = pts[i].x - s.mean.x, dy = pts[i].y - s.mean.y;
    sxx += w * dx * dx;
    syy += w * dy * dy;
    sxy += w * dx * dy;
  }
  sxx /= wsum;
  syy /= wsum;
  sxy /= wsum;
  const double tr = 0.5 * (sxx + syy);
  const double disc = std::hypot(0.5 * (sxx - syy), sxy);
  s.lambda1 = tr + disc;
  s.lambda2 = std::max(0.0, tr - disc);
  double ang = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
  if (ang < 0.0) ang += std::numbers::pi;
  s.orientation = ang;
  return s;
}

/// lambda1 / lambda2, or +inf when the points are (numerically) collinear.
inline double eigen_ratio(const Scatter2& s) {
  if (!(s.lambda2 > 1e-14 * s.lambda1) || s.lambda2 <= 0.0) return std::numeric_limits<double>::infinity();
  return s.lambda1 / s.lambda2;
}

/// Convex hull, counter-clockwise, without repeated endpoint.
inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) { return a.x == b.x && a.y == b.y; }),
            pts.end());
  if (pts.size() < 3) return pts;
  auto cross = [](const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
  };
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

/// Largest pairwise distance of a point set.
inline double max_pairwise_distance(std::span<const Vec2> pts) {
  const auto hull = convex_hull(std::vector<Vec2>(pts.begin(), pts.end()));
  double best = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i)
    for (std::size_t j = i + 1; j < hull.size(); ++j)
      best = std::max(best, std::hypot(hull[i].x - hull[j].x, hull[i].y - hull[j].y));
  return best;
}

}  // namespace fovgrid
