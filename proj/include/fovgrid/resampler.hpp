#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "fovgrid/sampler.hpp"
#include "fovgrid/signal.hpp"

namespace fovgrid {

/// Pixels per visual degree: the field-of-view diameter spans scale * min(H, W) pixels.
inline double pixels_per_degree(const CmfParams& p, std::size_t height, std::size_t width, const FixationSpec& fix) {
  return fix.scale * static_cast<double>(std::min(height, width)) / (2.0 * p.r_max);
}

/// Continuous pixel coordinates (column, row) of a visual position; integers are pixel centres.
inline std::pair<double, double> visual_to_pixel(const CmfParams& p, std::size_t height, std::size_t width,
                                                 const FixationSpec& fix, double x, double y) {
  const double ppd = pixels_per_degree(p, height, width, fix);
  return {fix.cx * static_cast<double>(width) - 0.5 + x * ppd, fix.cy * static_cast<double>(height) - 0.5 - y * ppd};
}

namespace detail {

/// Bilinear lookup; positions more than half a pixel outside the image read as 0.
inline void sample_bilinear(const Image& img, double px, double py, float* out) {
  const double w = static_cast<double>(img.width), h = static_cast<double>(img.height);
  if (px < -0.5 || py < -0.5 || px > w - 0.5 || py > h - 0.5) {
    for (std::size_t c = 0; c < img.channels; ++c) out[c] = 0.0f;
    return;
  }
  px = std::clamp(px, 0.0, w - 1.0);
  py = std::clamp(py, 0.0, h - 1.0);
  auto x0 = static_cast<std::size_t>(std::floor(px));
  auto y0 = static_cast<std::size_t>(std::floor(py));
  const std::size_t x1 = std::min(x0 + 1, img.width - 1);
  const std::size_t y1 = std::min(y0 + 1, img.height - 1);
  const double fx = px - static_cast<double>(x0), fy = py - static_cast<double>(y0);
  for (std::size_t c = 0; c < img.channels; ++c) {
    const double top = (1.0 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c);
    const double bot = (1.0 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c);
    out[c] = static_cast<float>((1.0 - fy) * top + fy * bot);
  }
}

inline bool in_field_of_view(const SensorGrid& g, double x, double y) {
  if (g.layout == GridLayout::lattice) return std::abs(x) <= g.params.r_max && std::abs(y) <= g.params.r_max;
  return std::hypot(x, y) <= g.params.r_max;
}

/// Uniform bins over the active samples for nearest-sample queries in visual space.
class NearestSampleIndex {
 public:
  explicit NearestSampleIndex(const SensorGrid& g) : g_(g) {
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!g.points[i].is_padding) extent_ = std::max({extent_, std::abs(g.points[i].x), std::abs(g.points[i].y)});
    extent_ = std::max(extent_, 1e-12) * (1.0 + 1e-9);
    side_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(g.n_active) / 2.0)));
    cell_ = 2.0 * extent_ / static_cast<double>(side_);
    bins_.resize(side_ * side_);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!g.points[i].is_padding) bins_[bin_of(g.points[i].x, g.points[i].y)].push_back(static_cast<std::uint32_t>(i));
  }

  std::uint32_t nearest(double x, double y) const {
    const auto [bx, by] = cell_coords(x, y);
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    for (long ring = 0; ring < static_cast<long>(side_); ++ring) {
      // Any point in a ring of bins at Chebyshev distance `ring` is at least (ring - 1) cells away.
      if (ring >= 1 && (static_cast<double>(ring) - 1.0) * cell_ > std::sqrt(best)) break;
      for (long dy = -ring; dy <= ring; ++dy)
        for (long dx = -ring; dx <= ring; ++dx) {
          if (std::max(std::abs(dx), std::abs(dy)) != ring) continue;
          const long cx = bx + dx, cy = by + dy;
          if (cx < 0 || cy < 0 || cx >= static_cast<long>(side_) || cy >= static_cast<long>(side_)) continue;
          for (auto i : bins_[static_cast<std::size_t>(cy) * side_ + static_cast<std::size_t>(cx)]) {
            const double d = (g_.points[i].x - x) * (g_.points[i].x - x) + (g_.points[i].y - y) * (g_.points[i].y - y);
            if (d < best || (d == best && i < arg)) {
              best = d;
              arg = i;
            }
          }
        }
    }
    return arg;
  }

 private:
  std::pair<long, long> cell_coords(double x, double y) const {
    auto c = [&](double v) {
      const long b = static_cast<long>(std::floor((v + extent_) / cell_));
      return std::clamp<long>(b, 0, static_cast<long>(side_) - 1);
    };
    return {c(x), c(y)};
  }
  std::size_t bin_of(double x, double y) const {
    const auto [bx, by] = cell_coords(x, y);
    return static_cast<std::size_t>(by) * side_ + static_cast<std::size_t>(bx);
  }

  const SensorGrid& g_;
  double extent_ = 0.0;
  std::size_t side_ = 1;
  double cell_ = 1.0;
  std::vector<std::vector<std::uint32_t>> bins_;
};

}  // namespace detail

/// Samples the image at every active sensor point; padding points and points
/// falling off the image carry 0.
inline FoveatedSignal foveate(const Image& image, const SensorGrid& grid, const FixationSpec& fix) {
  if (image.empty()) throw std::invalid_argument("image must be non-empty");
  if (image.data.size() != image.height * image.width * image.channels)
    throw std::invalid_argument("image buffer does not match its dimensions");
  fix.validate();
  FoveatedSignal s;
  s.grid_id = grid.id();
  s.fixation = fix;
  s.n = grid.size();
  s.channels = image.channels;
  s.source_height = image.height;
  s.source_width = image.width;
  s.values.assign(s.n * s.channels, 0.0f);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& p = grid.points[i];
    if (p.is_padding) continue;
    const auto [px, py] = visual_to_pixel(grid.params, image.height, image.width, fix, p.x, p.y);
    detail::sample_bilinear(image, px, py, &s.values[i * s.channels]);
  }
  return s;
}

/// Nearest-sample rendering onto an out_h x out_w canvas of the source image. The
/// extra last channel is 1 inside the field of view and 0 outside.
inline Image backproject(const FoveatedSignal& signal, const SensorGrid& grid, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw std::invalid_argument("output dimensions must be positive");
  if (signal.n != grid.size()) throw std::invalid_argument("signal does not match grid");
  Image out(out_h, out_w, signal.channels + 1, 0.0f);
  const detail::NearestSampleIndex index(grid);
  const double ppd = pixels_per_degree(grid.params, out_h, out_w, signal.fixation);
  for (std::size_t row = 0; row < out_h; ++row)
    for (std::size_t col = 0; col < out_w; ++col) {
      const double x = (static_cast<double>(col) + 0.5 - signal.fixation.cx * static_cast<double>(out_w)) / ppd;
      const double y = (signal.fixation.cy * static_cast<double>(out_h) - 0.5 - static_cast<double>(row)) / ppd;
      if (!detail::in_field_of_view(grid, x, y)) continue;
      const auto i = index.nearest(x, y);
      for (std::size_t c = 0; c < signal.channels; ++c) out.at(row, col, c) = signal.at(i, c);
      out.at(row, col, signal.channels) = 1.0f;
    }
  return out;
}

/// Nearest active sample index per pixel, or -1 outside the field of view.
inline std::vector<std::int64_t> voronoi_labels(const SensorGrid& grid, std::size_t out_h, std::size_t out_w,
                                                const FixationSpec& fix) {
  std::vector<std::int64_t> labels(out_h * out_w, -1);
  const detail::NearestSampleIndex index(grid);
  const double ppd = pixels_per_degree(grid.params, out_h, out_w, fix);
  for (std::size_t row = 0; row < out_h; ++row)
    for (std::size_t col = 0; col < out_w; ++col) {
      const double x = (static_cast<double>(col) + 0.5 - fix.cx * static_cast<double>(out_w)) / ppd;
      const double y = (fix.cy * static_cast<double>(out_h) - 0.5 - static_cast<double>(row)) / ppd;
      if (detail::in_field_of_view(grid, x, y)) labels[row * out_w + col] = index.nearest(x, y);
    }
  return labels;
}

struct FixationZone {
  double radius = 0.25;
  std::size_t count = 4;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(radius >= 0.0 && radius <= 0.5)) throw std::invalid_argument("fixation zone radius must lie in [0, 0.5]");
    if (count < 1) throw std::invalid_argument("fixation count must be at least 1");
  }
};

/// Fixation centres drawn uniformly over a disc about the image centre.
inline std::vector<FixationSpec> sample_fixations(const FixationZone& zone, double scale = 1.0) {
  zone.validate();
  std::mt19937_64 rng(zone.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<FixationSpec> out(zone.count);
  for (auto& f : out) {
    const double rho = zone.radius * std::sqrt(unit(rng));
    const double phi = kTwoPi * unit(rng);
    f.cx = 0.5 + rho * std::cos(phi);
    f.cy = 0.5 + rho * std::sin(phi);
    f.scale = scale;
  }
  return out;
}

struct ResolutionSample {
  std::size_t ring = 0;
  double r = 0.0;
  /// Sensor samples per native pixel along one dimension; 1 means native resolution.
  double ratio = 0.0;
};

/// Local linear sampling density relative to the native pixel grid, per ring. Sample
/// spacing is the geometric mean of the radial and arc spacings.
inline std::vector<ResolutionSample> local_resolution_profile(const SensorGrid& grid, std::size_t native_h,
                                                              std::size_t native_w, const FixationSpec& fix) {
  if (native_h == 0 || native_w == 0) throw std::invalid_argument("native dimensions must be positive");
  const double ppd = pixels_per_degree(grid.params, native_h, native_w, fix);
  std::vector<ResolutionSample> out;
  if (grid.layout == GridLayout::lattice) {
    const double ratio = 1.0 / (grid.lattice_spacing * ppd);
    for (int i = 0; i <= 8; ++i) out.push_back({static_cast<std::size_t>(i), grid.params.r_max * i / 8.0, ratio});
    return out;
  }
  const auto& radii = grid.scheme.radii;
  const std::size_t n_r = grid.scheme.n_r;
  const auto dr = detail::index_gradient(std::span<const double>(radii).first(n_r));
  for (std::size_t i = 0; i < n_r; ++i) {
    double spacing;
    if (i == 0) {
      spacing = radii[1] - radii[0];
    } else {
      const double arc = kTwoPi * radii[i] / static_cast<double>(grid.ring_counts[i]);
      spacing = std::sqrt(dr[i] * arc);
    }
    out.push_back({i, radii[i], 1.0 / (spacing * ppd)});
  }
  return out;
}

}  // namespace fovgrid
