#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fovgrid/cmf.hpp"

namespace fovgrid {

/// How many angular samples a ring receives.
///
/// `finite_difference_ceil` measures the radial gap at each ring with
/// second-order finite differences of the ring radii (one-sided at the two
/// ends) and takes the ceiling of circumference / gap. This is the rule that
/// reproduces the published sample counts (3976 points at a = 2.79, 4032 at
/// a = 60.94 for a 4096 budget) and the published exact-64 patch grids.
///
/// `analytic_round` uses the continuous isotropy condition
/// 2*pi*r*M(r) / delta_w, rounded half-to-even.
enum class IsotropyRule { finite_difference_ceil, analytic_round };

inline const char* to_string(IsotropyRule rule) {
  return rule == IsotropyRule::analytic_round ? "analytic_round" : "finite_difference_ceil";
}

inline IsotropyRule isotropy_rule_from_string(const std::string& s) {
  if (s == "analytic_round") return IsotropyRule::analytic_round;
  if (s == "finite_difference_ceil") return IsotropyRule::finite_difference_ceil;
  throw std::invalid_argument("unknown isotropy rule: " + s);
}

enum class GridLayout : std::uint8_t { radial = 0, lattice = 1 };
enum class Hemifield : std::uint8_t { right = 0, left = 1 };

/// Rings equally spaced in cortical position. Ring 0 is the single pole sample
/// at w = 0; rings at index >= n_r lie beyond the field of view (padding).
struct RadialScheme {
  std::size_t n_r = 0;
  std::size_t pad_rings = 0;
  double delta_w = 0.0;
  bool includes_pole = true;
  std::vector<double> w_values;
  std::vector<double> radii;

  std::size_t ring_count() const { return w_values.size(); }
  bool is_padding_ring(std::size_t ring) const { return ring >= n_r; }
};

struct SensorPoint {
  double x = 0.0;
  double y = 0.0;
  double r = 0.0;
  double theta = 0.0;
  double w = 0.0;
  std::uint32_t ring_index = 0;
  double flat_u = 0.0;
  double flat_v = 0.0;
  Hemifield hemifield = Hemifield::right;
  bool is_padding = false;
};

struct GridOptions {
  std::size_t pad_rings = 0;
  bool stagger = false;
  IsotropyRule rule = IsotropyRule::finite_difference_ceil;
};

/// An immutable set of sensor locations, ring-major and angle-minor.
struct SensorGrid {
  CmfParams params;
  RadialScheme scheme;
  GridLayout layout = GridLayout::radial;
  IsotropyRule rule = IsotropyRule::finite_difference_ceil;
  bool stagger = false;
  std::vector<SensorPoint> points;
  std::vector<std::uint32_t> ring_counts;
  std::vector<std::uint32_t> ring_starts;
  std::vector<double> ring_offsets;
  std::size_t n_active = 0;
  /// Lattice layouts only: side of the active block and the lattice pitch in degrees.
  std::size_t lattice_side = 0;
  std::size_t lattice_pad = 0;
  double lattice_spacing = 0.0;

  std::size_t size() const { return points.size(); }
  const SensorPoint& operator[](std::size_t i) const { return points[i]; }

  /// Cortical spacing between neighbouring samples.
  double delta_w() const { return scheme.delta_w; }

  /// Stable 64-bit fingerprint of the geometry, used to tie derived tables to their grid.
  std::string id() const;
};

namespace detail {

inline std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

/// d r / d(index) by second-order finite differences; first order for two samples.
inline std::vector<double> index_gradient(std::span<const double> r) {
  const std::size_t n = r.size();
  std::vector<double> g(n, 0.0);
  if (n < 2) return g;
  if (n == 2) {
    g[0] = g[1] = r[1] - r[0];
    return g;
  }
  g[0] = (-3.0 * r[0] + 4.0 * r[1] - r[2]) / 2.0;
  for (std::size_t i = 1; i + 1 < n; ++i) g[i] = (r[i + 1] - r[i - 1]) / 2.0;
  g[n - 1] = (3.0 * r[n - 1] - 4.0 * r[n - 2] + r[n - 3]) / 2.0;
  return g;
}

inline std::uint32_t ceil_count(double c) {
  // Guard against values like 18.000000000001 produced by rounding noise.
  const double v = std::ceil(c - 1e-9);
  return v < 1.0 ? 1u : static_cast<std::uint32_t>(v);
}

inline std::uint32_t round_even_count(double c) {
  const double v = std::nearbyint(c);
  return v < 1.0 ? 1u : static_cast<std::uint32_t>(v);
}

}  // namespace detail

inline std::string SensorGrid::id() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = detail::fnv1a(h, &params.a, sizeof(double));
  h = detail::fnv1a(h, &params.r_max, sizeof(double));
  const auto lay = static_cast<std::uint8_t>(layout);
  h = detail::fnv1a(h, &lay, 1);
  for (const auto& p : points) {
    h = detail::fnv1a(h, &p.x, sizeof(double));
    h = detail::fnv1a(h, &p.y, sizeof(double));
    const std::uint8_t pad = p.is_padding ? 1 : 0;
    h = detail::fnv1a(h, &pad, 1);
  }
  return detail::hex64(h);
}

/// Rings at w = i / (n_r - 1) for i in [0, n_r + pad_rings).
inline RadialScheme build_radial_scheme(const CmfParams& params, std::size_t n_r, std::size_t pad_rings = 0) {
  if (n_r < 2) throw std::invalid_argument("n_r must be at least 2");
  RadialScheme s;
  s.n_r = n_r;
  s.pad_rings = pad_rings;
  s.delta_w = 1.0 / static_cast<double>(n_r - 1);
  s.includes_pole = true;
  const std::size_t total = n_r + pad_rings;
  s.w_values.resize(total);
  s.radii.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    const double w = (i == n_r - 1) ? 1.0 : static_cast<double>(i) * s.delta_w;
    s.w_values[i] = w;
    s.radii[i] = invert_cmf(params, w);
  }
  return s;
}

/// Angular sample count per ring. The pole ring always holds one sample.
///
/// Under the finite-difference rule, active rings use only the active radii so
/// that adding padding rings never changes the active sample count.
inline std::vector<std::uint32_t> angular_counts(const RadialScheme& scheme, const CmfParams& params,
                                                 IsotropyRule rule = IsotropyRule::finite_difference_ceil) {
  const std::size_t total = scheme.ring_count();
  std::vector<std::uint32_t> counts(total, 1);
  if (rule == IsotropyRule::analytic_round) {
    for (std::size_t i = 1; i < total; ++i) {
      const double r = scheme.radii[i];
      counts[i] = detail::round_even_count(kTwoPi * r * magnification(params, r) / scheme.delta_w);
    }
    return counts;
  }
  const std::span<const double> all(scheme.radii);
  const auto active_grad = detail::index_gradient(all.first(scheme.n_r));
  const auto full_grad = detail::index_gradient(all);
  for (std::size_t i = 1; i < total; ++i) {
    const double dr = i < scheme.n_r ? active_grad[i] : full_grad[i];
    counts[i] = detail::ceil_count(kTwoPi * scheme.radii[i] / dr);
  }
  return counts;
}

/// Number of active (non-padding) samples for a ring count, without building points.
inline std::size_t grid_size(const CmfParams& params, std::size_t n_r,
                             IsotropyRule rule = IsotropyRule::finite_difference_ceil) {
  const auto scheme = build_radial_scheme(params, n_r, 0);
  const auto counts = angular_counts(scheme, params, rule);
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

namespace detail {

/// Complex-log chart per hemifield, with the cut on the vertical meridian.
/// The right field maps through log(z + a); the left field is mirrored so the
/// two charts meet at u = 0 (the fovea) and extend in opposite directions.
inline void flat_coordinates(const CmfParams& p, SensorPoint& pt) {
  const bool left = pt.x < 0.0;
  pt.hemifield = left ? Hemifield::left : Hemifield::right;
  const std::complex<double> z(left ? -pt.x : pt.x, pt.y);
  const auto zeta = std::log(z + p.a);
  const double u = zeta.real() - std::log(p.a);
  pt.flat_u = left ? -u : u;
  pt.flat_v = zeta.imag();
}

}  // namespace detail

/// Isotropic foveated grid with n_r active rings plus `opts.pad_rings` padding rings.
inline SensorGrid build_grid(const CmfParams& params, std::size_t n_r, const GridOptions& opts = {}) {
  SensorGrid g;
  g.params = params;
  g.layout = GridLayout::radial;
  g.rule = opts.rule;
  g.stagger = opts.stagger;
  g.scheme = build_radial_scheme(params, n_r, opts.pad_rings);
  g.ring_counts = angular_counts(g.scheme, params, opts.rule);
  const std::size_t rings = g.scheme.ring_count();
  g.ring_starts.resize(rings);
  g.ring_offsets.assign(rings, 0.0);
  std::size_t total = 0;
  for (std::size_t i = 0; i < rings; ++i) {
    g.ring_starts[i] = static_cast<std::uint32_t>(total);
    total += g.ring_counts[i];
  }
  g.points.reserve(total);
  for (std::size_t i = 0; i < rings; ++i) {
    const std::uint32_t n = g.ring_counts[i];
    const double step = kTwoPi / static_cast<double>(n);
    const double offset = (opts.stagger && (i % 2 == 1) && n > 1) ? step / 2.0 : 0.0;
    g.ring_offsets[i] = offset;
    const double r = g.scheme.radii[i];
    const bool pad = g.scheme.is_padding_ring(i);
    for (std::uint32_t j = 0; j < n; ++j) {
      SensorPoint pt;
      pt.theta = r == 0.0 ? 0.0 : wrap_angle(offset + step * static_cast<double>(j));
      pt.r = r;
      pt.x = r * std::cos(pt.theta);
      pt.y = r * std::sin(pt.theta);
      pt.w = g.scheme.w_values[i];
      pt.ring_index = static_cast<std::uint32_t>(i);
      pt.is_padding = pad;
      detail::flat_coordinates(params, pt);
      g.points.push_back(pt);
    }
    if (!pad) g.n_active += n;
  }
  return g;
}

/// Square lattice arrangement of a near-uniform sensor (the a -> infinity limit laid
/// out on pixel centres). The active block is side x side samples with pitch `spacing`
/// degrees; `pad` extra lattice rows/columns around it are padding units. Points are
/// row-major from the top row (largest y); ring_index holds the row.
inline SensorGrid build_lattice_grid(std::size_t side, double spacing, double a = 1e6, std::size_t pad = 1) {
  if (side < 1) throw std::invalid_argument("lattice side must be positive");
  if (!(spacing > 0.0)) throw std::invalid_argument("lattice spacing must be positive");
  SensorGrid g;
  g.layout = GridLayout::lattice;
  g.params = CmfParams::make(a, spacing * static_cast<double>(side) / 2.0);
  g.lattice_side = side;
  g.lattice_pad = pad;
  g.lattice_spacing = spacing;
  const std::size_t full = side + 2 * pad;
  g.scheme.n_r = 0;
  g.scheme.pad_rings = 0;
  g.scheme.includes_pole = false;
  g.scheme.delta_w = integrate_cmf(g.params, spacing);
  const double half = (static_cast<double>(side) - 1.0) / 2.0;
  g.points.reserve(full * full);
  for (std::size_t row = 0; row < full; ++row) {
    g.ring_starts.push_back(static_cast<std::uint32_t>(g.points.size()));
    g.ring_counts.push_back(static_cast<std::uint32_t>(full));
    g.ring_offsets.push_back(0.0);
    for (std::size_t col = 0; col < full; ++col) {
      SensorPoint pt;
      const double cx = static_cast<double>(col) - static_cast<double>(pad) - half;
      const double cy = half - (static_cast<double>(row) - static_cast<double>(pad));
      pt.x = cx * spacing;
      pt.y = cy * spacing;
      pt.r = std::hypot(pt.x, pt.y);
      pt.theta = pt.r == 0.0 ? 0.0 : wrap_angle(std::atan2(pt.y, pt.x));
      pt.w = integrate_cmf(g.params, pt.r);
      pt.ring_index = static_cast<std::uint32_t>(row);
      pt.is_padding = row < pad || col < pad || row >= pad + side || col >= pad + side;
      detail::flat_coordinates(g.params, pt);
      if (!pt.is_padding) ++g.n_active;
      g.points.push_back(pt);
    }
  }
  return g;
}

/// Padding rings needed so that kNNs of size up to k_max at the edge are filled by padding units.
inline std::size_t default_pad_rings(std::size_t k_max) {
  return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(k_max)) / 2.0)) + 1;
}

/// Ring count whose grid is the largest not exceeding `target_n` active samples.
/// Ties go to the smaller ring count.
inline std::size_t search_resolution(const CmfParams& params, std::size_t target_n,
                                     IsotropyRule rule = IsotropyRule::finite_difference_ceil) {
  if (target_n < 4) throw std::invalid_argument("target_n must be at least 4");
  std::optional<std::size_t> best;
  std::size_t best_size = 0;
  const std::size_t stop_above = target_n + target_n / 4 + 16;
  for (std::size_t n_r = 2;; ++n_r) {
    const std::size_t n = grid_size(params, n_r, rule);
    if (n <= target_n && (!best || n > best_size)) {
      best = n_r;
      best_size = n;
    }
    if (n > stop_above) break;
    if (n_r > 100000) break;
  }
  if (!best) throw DomainError("target sample count is below the smallest grid for these parameters");
  return *best;
}

/// One foveation value that yields exactly the requested number of samples.
struct ExactNSolution {
  std::size_t n_r = 0;
  /// Reported value: the weakest foveation (largest a) that still gives exactly n.
  double a = 0.0;
  /// Interval of a over which the grid holds exactly n samples.
  double a_lower = 0.0;
  double a_upper = 0.0;
};

struct ExactNOptions {
  std::size_t n_r_min = 2;
  std::size_t n_r_max = 64;
  double a_min = 1e-2;
  double a_max = 1e3;
  /// Bisection stops when the bracket is narrower than this in log10(a).
  double log10_tolerance = 1e-6;
  IsotropyRule rule = IsotropyRule::finite_difference_ceil;
};

/// For each ring count, bisects over log10(a) for the transitions of the (piecewise
/// constant, nondecreasing) grid size through `target_n`. Ring counts without an exact
/// match are skipped. Results are sorted by a.
inline std::vector<ExactNSolution> solve_a_for_exact_n(std::size_t target_n, double r_max,
                                                       const ExactNOptions& opts = {}) {
  if (target_n < 4) throw std::invalid_argument("target_n must be at least 4");
  auto size_at = [&](double log_a, std::size_t n_r) {
    return grid_size(CmfParams::make(std::pow(10.0, log_a), r_max), n_r, opts.rule);
  };
  const double lo0 = std::log10(opts.a_min);
  const double hi0 = std::log10(opts.a_max);
  std::vector<ExactNSolution> out;
  for (std::size_t n_r = std::max<std::size_t>(2, opts.n_r_min); n_r <= opts.n_r_max; ++n_r) {
    const std::size_t n_lo = size_at(lo0, n_r);
    const std::size_t n_hi = size_at(hi0, n_r);
    if (n_lo > target_n || n_hi < target_n) continue;

    // Upper transition: last a with size <= target.
    double lo = lo0, hi = hi0;
    if (n_hi <= target_n) {
      lo = hi0;
    } else {
      while (hi - lo > opts.log10_tolerance) {
        const double mid = 0.5 * (lo + hi);
        (size_at(mid, n_r) <= target_n ? lo : hi) = mid;
      }
    }
    const double upper = lo;
    if (size_at(upper, n_r) != target_n) continue;

    // Lower transition: first a with size >= target.
    double lo2 = lo0, hi2 = upper;
    if (n_lo >= target_n) {
      hi2 = lo0;
    } else {
      while (hi2 - lo2 > opts.log10_tolerance) {
        const double mid = 0.5 * (lo2 + hi2);
        (size_at(mid, n_r) >= target_n ? hi2 : lo2) = mid;
      }
    }
    ExactNSolution s;
    s.n_r = n_r;
    s.a = std::pow(10.0, upper);
    s.a_upper = s.a;
    s.a_lower = std::pow(10.0, hi2);
    out.push_back(s);
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.a < y.a; });
  return out;
}

/// Spacing on the manifold between neighbouring samples of each ring, relative to
/// delta_w: (2*pi*r*M(r)/count - delta_w) / delta_w. Entry 0 (pole) is 0.
inline std::vector<double> ring_isotropy_errors(const SensorGrid& g) {
  std::vector<double> err(g.ring_counts.size(), 0.0);
  if (g.layout != GridLayout::radial) return err;
  for (std::size_t i = 1; i < err.size(); ++i) {
    const double r = g.scheme.radii[i];
    const double arc = kTwoPi * r * magnification(g.params, r) / static_cast<double>(g.ring_counts[i]);
    err[i] = (arc - g.scheme.delta_w) / g.scheme.delta_w;
  }
  return err;
}

}  // namespace fovgrid
