#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fovgrid/geometry.hpp"
#include "fovgrid/neighborhoods.hpp"
#include "fovgrid/sampler.hpp"

namespace fovgrid {

enum class LayerKind : std::uint8_t { input = 0, conv = 1, pool = 2 };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::pool: return "pool";
    default: return "input";
  }
}

struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  std::size_t k = 9;
  std::size_t stride = 1;
};

/// Grids from input (index 0) to top. nbhds[l] maps grid l units onto grid l-1
/// samples; nbhds[0] is empty.
struct LayerStack {
  std::vector<LayerSpec> specs;
  std::vector<SensorGrid> grids;
  std::vector<NeighborhoodSet> nbhds;

  std::size_t depth() const { return grids.size(); }
};

/// Each layer's grid targets round(n_prev / stride^2) samples at the same a. Every
/// grid but the top carries enough padding rings for the layer that reads it.
inline LayerStack build_layer_stack(const CmfParams& params, std::size_t n_input, const std::vector<LayerSpec>& layers,
                                    IsotropyRule rule = IsotropyRule::finite_difference_ceil) {
  LayerStack st;
  st.specs.push_back({LayerKind::input, 1, 1});
  for (const auto& l : layers) {
    if (l.k == 0 || l.stride == 0) throw std::invalid_argument("layer k and stride must be positive");
    st.specs.push_back(l);
  }
  std::vector<std::size_t> n_rs;
  std::size_t n_prev = n_input;
  for (std::size_t l = 0; l < st.specs.size(); ++l) {
    std::size_t target = n_prev;
    if (l > 0) {
      const double st2 = static_cast<double>(st.specs[l].stride * st.specs[l].stride);
      target = static_cast<std::size_t>(std::lround(static_cast<double>(n_prev) / st2));
    }
    const std::size_t n_r = search_resolution(params, std::max<std::size_t>(target, 8), rule);
    n_rs.push_back(n_r);
    n_prev = grid_size(params, n_r, rule);
  }
  for (std::size_t l = 0; l < st.specs.size(); ++l) {
    GridOptions opts;
    opts.rule = rule;
    opts.pad_rings = l + 1 < st.specs.size() ? default_pad_rings(st.specs[l + 1].k) : 0;
    st.grids.push_back(build_grid(params, n_rs[l], opts));
  }
  st.nbhds.emplace_back();
  for (std::size_t l = 1; l < st.specs.size(); ++l) st.nbhds.push_back(knn(st.grids[l - 1], st.grids[l], st.specs[l].k));
  return st;
}

/// Result of tracing one unit down to the input grid.
struct Backprojection {
  std::vector<std::uint32_t> inputs;  // active input samples, ascending
  bool touches_padding = false;       // some neighbourhood on the way reached a padding unit
};

/// Composes neighbourhoods from (layer, unit) down to layer 0. Padding units carry no
/// activation, so they end a path and are never part of the result.
inline Backprojection rf_trace(const LayerStack& st, std::size_t layer, std::size_t unit) {
  if (layer >= st.depth()) throw std::out_of_range("layer out of range");
  if (unit >= st.grids[layer].size()) throw std::out_of_range("unit out of range");
  Backprojection bp;
  std::vector<std::uint32_t> current{static_cast<std::uint32_t>(unit)};
  if (st.grids[layer].points[unit].is_padding) {
    bp.touches_padding = true;
    return bp;
  }
  for (std::size_t l = layer; l > 0; --l) {
    const auto& nb = st.nbhds[l];
    const auto& below = st.grids[l - 1];
    std::vector<char> mark(below.size(), 0);
    std::vector<std::uint32_t> next;
    for (auto u : current)
      for (std::size_t i = 0; i < nb.k; ++i) {
        const auto v = nb.index(u, i);
        if (below.points[v].is_padding) {
          bp.touches_padding = true;
          continue;
        }
        if (!mark[v]) {
          mark[v] = 1;
          next.push_back(v);
        }
      }
    current.swap(next);
  }
  std::sort(current.begin(), current.end());
  bp.inputs = std::move(current);
  return bp;
}

inline std::vector<std::uint32_t> rf_backproject(const LayerStack& st, std::size_t layer, std::size_t unit) {
  return rf_trace(st, layer, unit).inputs;
}

struct ShapeFit {
  double aspect_ratio = 1.0;
  double orientation = 0.0;
  double sigma_major = 0.0;
};

/// Weighted second-moment Gaussian fit: aspect = sqrt(lambda1 / lambda2).
inline ShapeFit rf_shape_fit(std::span<const Vec2> pts, std::span<const double> weights = {}) {
  if (pts.size() < 8) throw std::invalid_argument("shape fit needs at least 8 points");
  if (!weights.empty() && weights.size() != pts.size()) throw std::invalid_argument("weights size mismatch");
  const auto s = scatter(pts, weights);
  ShapeFit f;
  const double ratio = eigen_ratio(s);
  f.aspect_ratio = std::isinf(ratio) ? ratio : std::sqrt(ratio);
  f.orientation = s.orientation;
  f.sigma_major = std::sqrt(s.lambda1);
  return f;
}

enum class DiameterStatistic { max_extent, gaussian };

struct RfRecord {
  std::size_t layer = 0;
  std::size_t unit = 0;
  double eccentricity = 0.0;
  double diameter = 0.0;
  double aspect_ratio = 1.0;
  std::size_t size = 0;
  bool touches_padding = false;
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::size_t n = 0;
};

inline LinearFit linear_fit(std::span<const double> xs, std::span<const double> ys) {
  LinearFit f;
  f.n = xs.size();
  if (xs.size() < 2) return f;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(xs.size());
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  return f;
}

struct LayerRfProfile {
  std::size_t layer = 0;
  std::vector<RfRecord> records;
  /// Fit over units whose back-projection never reaches padding.
  LinearFit fit;
  double mean_diameter = 0.0;
};

inline RfRecord rf_record(const LayerStack& st, std::size_t layer, std::size_t unit,
                          DiameterStatistic stat = DiameterStatistic::max_extent) {
  const auto bp = rf_trace(st, layer, unit);
  const auto& in = st.grids[0];
  std::vector<Vec2> pts;
  pts.reserve(bp.inputs.size());
  for (auto i : bp.inputs) pts.push_back({in.points[i].x, in.points[i].y});
  RfRecord rec;
  rec.layer = layer;
  rec.unit = unit;
  rec.eccentricity = st.grids[layer].points[unit].r;
  rec.size = pts.size();
  rec.touches_padding = bp.touches_padding;
  if (pts.size() >= 8) {
    const auto fit = rf_shape_fit(pts);
    rec.aspect_ratio = fit.aspect_ratio;
    rec.diameter = stat == DiameterStatistic::max_extent ? max_pairwise_distance(pts) : 4.0 * fit.sigma_major;
  } else {
    rec.diameter = max_pairwise_distance(pts);
  }
  return rec;
}

/// Diameter against eccentricity for every active unit of every layer above the input.
inline std::vector<LayerRfProfile> rf_diameter_profile(const LayerStack& st,
                                                       DiameterStatistic stat = DiameterStatistic::max_extent) {
  std::vector<LayerRfProfile> out;
  for (std::size_t l = 1; l < st.depth(); ++l) {
    LayerRfProfile prof;
    prof.layer = l;
    std::vector<double> xs, ys;
    double dsum = 0.0;
    for (std::size_t u = 0; u < st.grids[l].size(); ++u) {
      if (st.grids[l].points[u].is_padding) continue;
      const auto rec = rf_record(st, l, u, stat);
      if (!rec.touches_padding) {
        xs.push_back(rec.eccentricity);
        ys.push_back(rec.diameter);
        dsum += rec.diameter;
      }
      prof.records.push_back(rec);
    }
    prof.fit = linear_fit(xs, ys);
    prof.mean_diameter = xs.empty() ? 0.0 : dsum / static_cast<double>(xs.size());
    out.push_back(std::move(prof));
  }
  return out;
}

/// Histogram mode (centre of the fullest bin) of finite values.
inline double histogram_mode(std::span<const double> values, double lo, double hi, std::size_t bins) {
  std::vector<std::size_t> h(bins, 0);
  for (double v : values) {
    if (!std::isfinite(v) || v < lo || v >= hi) continue;
    h[static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins))]++;
  }
  const auto it = std::max_element(h.begin(), h.end());
  const auto b = static_cast<double>(it - h.begin());
  return lo + (b + 0.5) * (hi - lo) / static_cast<double>(bins);
}

/// Transformer dimensions. The MLP is gated (three d x mlp matrices) unless `gated_mlp` is false.
struct VitFlopsConfig {
  std::size_t embed_dim = 384;
  std::size_t mlp_dim = 1536;
  std::size_t layers = 12;
  std::size_t heads = 6;
  std::size_t patch_dim = 768;
  std::size_t extra_tokens = 5;
  std::size_t num_classes = 1000;
  std::size_t patch_side = 8;
  bool gated_mlp = true;
  bool include_bias = false;

  void validate() const {
    if (embed_dim == 0 || mlp_dim == 0 || layers == 0 || heads == 0 || patch_dim == 0 || patch_side == 0)
      throw std::invalid_argument("ViT dimensions must be positive");
  }

  /// Token count for an m x m image: one per patch plus the extra tokens.
  std::size_t tokens_for_resolution(std::size_t m) const {
    const std::size_t side = m / patch_side;
    return side * side + extra_tokens;
  }
};

/// FLOPs split. Attention counts the token-mixing products (QK^T and AV); all
/// projections, MLPs, patch embedding and head count as non-attention.
struct FlopsBreakdown {
  double attention = 0.0;
  double non_attention = 0.0;
  double total() const { return attention + non_attention; }
};

/// Analytic count with one multiply-accumulate = 2 FLOPs.
inline FlopsBreakdown vit_flops(const VitFlopsConfig& c, std::size_t n_tokens) {
  c.validate();
  if (n_tokens == 0) throw std::invalid_argument("token count must be positive");
  const double n = static_cast<double>(n_tokens);
  const double d = static_cast<double>(c.embed_dim);
  const double mlp = static_cast<double>(c.mlp_dim);
  const double L = static_cast<double>(c.layers);
  const double patches = n_tokens > c.extra_tokens ? n - static_cast<double>(c.extra_tokens) : 0.0;
  const double mlp_mats = c.gated_mlp ? 3.0 : 2.0;

  const double attn_macs = L * 2.0 * n * n * d;
  double other_macs = L * (4.0 * n * d * d + mlp_mats * n * d * mlp);
  other_macs += patches * static_cast<double>(c.patch_dim) * d;
  other_macs += d * static_cast<double>(c.num_classes);
  if (c.include_bias) {
    const double per_layer = n * (4.0 * d + (mlp_mats - 1.0) * mlp + d);
    other_macs += L * per_layer + patches * d + static_cast<double>(c.num_classes);
  }
  return {2.0 * attn_macs, 2.0 * other_macs};
}

struct PowerLaw {
  double exponent = 0.0;
  double prefactor = 0.0;
};

/// Least-squares line in log-log space.
inline PowerLaw powerlaw_fit(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 3) throw std::invalid_argument("power-law fit needs >= 3 paired points");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) throw std::invalid_argument("power-law fit needs positive data");
    lx.push_back(std::log(xs[i]));
    ly.push_back(std::log(ys[i]));
  }
  const auto f = linear_fit(lx, ly);
  return {f.slope, std::exp(f.intercept)};
}

struct FlopsRow {
  std::size_t resolution = 0;
  std::size_t tokens = 0;
  std::size_t fixations = 0;
  double attention = 0.0;
  double non_attention = 0.0;
  double total = 0.0;
};

inline std::vector<FlopsRow> fixation_flops_curve(const VitFlopsConfig& c, const std::vector<std::size_t>& resolutions,
                                                  const std::vector<std::size_t>& fixations) {
  std::vector<FlopsRow> rows;
  for (auto m : resolutions) {
    const std::size_t n = c.tokens_for_resolution(m);
    const auto f = vit_flops(c, n);
    for (auto k : fixations) {
      const double kk = static_cast<double>(k);
      FlopsRow r{m, n, k, kk * f.attention, kk * f.non_attention, 0.0};
      r.total = r.attention + r.non_attention;
      rows.push_back(r);
    }
  }
  return rows;
}

}  // namespace fovgrid
