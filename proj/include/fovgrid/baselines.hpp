#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fovgrid/geometry.hpp"
#include "fovgrid/neighborhoods.hpp"
#include "fovgrid/sampler.hpp"

namespace fovgrid {

enum class BaselineKind : std::uint8_t { log_polar = 0, warped_cartesian = 1 };

inline const char* to_string(BaselineKind k) {
  return k == BaselineKind::log_polar ? "log_polar" : "warped_cartesian";
}

/// Comparison sensor laid out on a rows x cols index lattice. Log-polar rows are
/// rings and columns are angles; warped-Cartesian rows run top to bottom.
struct BaselineGrid {
  BaselineKind kind = BaselineKind::log_polar;
  std::size_t rows = 0;
  std::size_t cols = 0;
  double a = 0.0;
  double r_max = 0.0;
  std::vector<Vec2> points;    // row-major
  std::vector<double> radii;   // log-polar ring radii

  std::size_t size() const { return points.size(); }
};

/// Log-polar sampler: rows uniform in log(r + a) from r = r_max / 1000 to r_max,
/// columns uniform in angle.
inline BaselineGrid logpolar_grid(double a, std::size_t n_r, std::size_t n_theta, double r_max) {
  if (n_r < 2 || n_theta < 2) throw std::invalid_argument("log-polar counts must be at least 2");
  if (!(a > 0.0) || !(r_max > 0.0)) throw std::invalid_argument("a and r_max must be positive");
  BaselineGrid g;
  g.kind = BaselineKind::log_polar;
  g.rows = n_r;
  g.cols = n_theta;
  g.a = a;
  g.r_max = r_max;
  const double l0 = std::log(r_max / 1000.0 + a);
  const double l1 = std::log(r_max + a);
  for (std::size_t i = 0; i < n_r; ++i) {
    const double l = l0 + (l1 - l0) * static_cast<double>(i) / static_cast<double>(n_r - 1);
    const double r = i + 1 == n_r ? r_max : std::exp(l) - a;
    g.radii.push_back(r);
    for (std::size_t j = 0; j < n_theta; ++j) {
      const double th = kTwoPi * static_cast<double>(j) / static_cast<double>(n_theta);
      g.points.push_back({r * std::cos(th), r * std::sin(th)});
    }
  }
  return g;
}

/// Radial warp of a side x side lattice spanning [-r_max, r_max]^2. A lattice point at
/// radius rho moves to the eccentricity whose cumulative profile fraction equals
/// rho / r_d, with r_d the half-diagonal. `profile` is the target linear sampling
/// density as a function of eccentricity (positive, nonincreasing).
inline BaselineGrid warped_cartesian_grid(const std::function<double(double)>& profile, std::size_t side, double r_max,
                                          double a_label = 0.0) {
  if (side < 2) throw std::invalid_argument("side must be at least 2");
  if (!(r_max > 0.0)) throw std::invalid_argument("r_max must be positive");
  const double r_d = std::sqrt(2.0) * r_max;
  // Cumulative profile on a fine grid, trapezoid rule.
  const std::size_t steps = 20000;
  std::vector<double> cum(steps + 1, 0.0);
  double prev = profile(0.0);
  if (!(prev > 0.0)) throw std::invalid_argument("profile must be positive");
  for (std::size_t i = 1; i <= steps; ++i) {
    const double r = r_d * static_cast<double>(i) / steps;
    const double cur = profile(r);
    if (!(cur > 0.0)) throw std::invalid_argument("profile must be positive");
    if (cur > prev * (1.0 + 1e-12)) throw std::invalid_argument("profile must be nonincreasing");
    cum[i] = cum[i - 1] + 0.5 * (prev + cur) * (r_d / steps);
    prev = cur;
  }
  const double total = cum.back();
  auto warp = [&](double rho) {
    const double target = total * std::clamp(rho / r_d, 0.0, 1.0);
    const auto it = std::lower_bound(cum.begin(), cum.end(), target);
    if (it == cum.begin()) return 0.0;
    if (it == cum.end()) return r_d;
    const auto i = static_cast<std::size_t>(it - cum.begin());
    const double f = (target - cum[i - 1]) / (cum[i] - cum[i - 1]);
    return r_d * (static_cast<double>(i - 1) + f) / steps;
  };
  BaselineGrid g;
  g.kind = BaselineKind::warped_cartesian;
  g.rows = side;
  g.cols = side;
  g.a = a_label;
  g.r_max = r_max;
  const double h = 2.0 * r_max / static_cast<double>(side - 1);
  const double half = (static_cast<double>(side) - 1.0) / 2.0;
  for (std::size_t row = 0; row < side; ++row)
    for (std::size_t col = 0; col < side; ++col) {
      const double x = (static_cast<double>(col) - half) * h;
      const double y = (half - static_cast<double>(row)) * h;
      const double rho = std::hypot(x, y);
      if (rho == 0.0) {
        g.points.push_back({0.0, 0.0});
        continue;
      }
      const double s = warp(rho) / rho;
      g.points.push_back({x * s, y * s});
    }
  return g;
}

/// Default warped-Cartesian sensor: density 1/(r + a) over the lattice half-diagonal.
inline BaselineGrid warped_cartesian_grid(double a, std::size_t side, double r_max) {
  if (!(a > 0.0)) throw std::invalid_argument("a must be positive");
  return warped_cartesian_grid([a](double r) { return 1.0 / (r + a); }, side, r_max, a);
}

struct RatioSample {
  double r = 0.0;
  double ratio = 0.0;
};

/// Log-polar: spacing to the next ring over the arc between adjacent angles, per ring.
inline std::vector<RatioSample> dr_dtheta_profile(const BaselineGrid& g) {
  if (g.kind != BaselineKind::log_polar) throw std::invalid_argument("dr/dtheta profile needs a log-polar grid");
  std::vector<RatioSample> out;
  const double dth = kTwoPi / static_cast<double>(g.cols);
  for (std::size_t i = 0; i < g.rows; ++i) {
    const double dr = i + 1 < g.rows ? g.radii[i + 1] - g.radii[i] : g.radii[i] - g.radii[i - 1];
    out.push_back({g.radii[i], dr / (g.radii[i] * dth)});
  }
  return out;
}

/// Same ratio for an isotropic grid: finite-difference ring gap over ring arc spacing,
/// for active rings other than the pole.
inline std::vector<RatioSample> dr_dtheta_profile(const SensorGrid& g) {
  if (g.layout != GridLayout::radial) throw std::invalid_argument("dr/dtheta profile needs a radial grid");
  const std::size_t n_r = g.scheme.n_r;
  const auto dr = detail::index_gradient(std::span<const double>(g.scheme.radii).first(n_r));
  std::vector<RatioSample> out;
  for (std::size_t i = 1; i < n_r; ++i) {
    const double arc = kTwoPi * g.scheme.radii[i] / static_cast<double>(g.ring_counts[i]);
    out.push_back({g.scheme.radii[i], dr[i] / arc});
  }
  return out;
}

/// sigma1^2 / sigma2^2 of the k points with the smallest `dist(i)`, taken in visual
/// coordinates. Ties in distance go to the lower index. +inf when collinear.
template <class Distance>
double anisotropy_of_neighbors(std::span<const Vec2> visual, std::size_t k, Distance&& dist) {
  if (k < 3 || k > visual.size()) throw std::invalid_argument("k must be in [3, point count]");
  std::vector<std::pair<double, std::size_t>> d(visual.size());
  for (std::size_t i = 0; i < visual.size(); ++i) d[i] = {dist(i), i};
  std::nth_element(d.begin(), d.begin() + static_cast<long>(k - 1), d.end());
  std::vector<Vec2> nb(k);
  for (std::size_t i = 0; i < k; ++i) nb[i] = visual[d[i].second];
  return eigen_ratio(scatter(nb));
}

/// Neighbours chosen by visual Euclidean distance to `query`.
inline double anisotropy_index(std::span<const Vec2> points, Vec2 query, std::size_t k) {
  return anisotropy_of_neighbors(points, k, [&](std::size_t i) {
    return std::hypot(points[i].x - query.x, points[i].y - query.y);
  });
}

/// Neighbours chosen on the sensor's own lattice (angle index wraps for log-polar),
/// shape measured in visual space.
inline double anisotropy_index(const BaselineGrid& g, std::size_t query, std::size_t k) {
  const long qr = static_cast<long>(query / g.cols), qc = static_cast<long>(query % g.cols);
  const long cols = static_cast<long>(g.cols);
  return anisotropy_of_neighbors(g.points, k, [&](std::size_t i) {
    const long r = static_cast<long>(i / g.cols), c = static_cast<long>(i % g.cols);
    long dc = std::abs(c - qc);
    if (g.kind == BaselineKind::log_polar) dc = std::min(dc, cols - dc);
    return std::hypot(static_cast<double>(r - qr), static_cast<double>(dc));
  });
}

/// Neighbours chosen by manifold distance, shape measured in visual space.
inline double anisotropy_index(const SensorGrid& g, std::size_t query, std::size_t k) {
  std::vector<Vec2> visual(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) visual[i] = {g.points[i].x, g.points[i].y};
  const auto& q = g.points.at(query);
  return anisotropy_of_neighbors(visual, k,
                                 [&](std::size_t i) { return manifold_distance(g.params, q, g.points[i]); });
}

}  // namespace fovgrid
