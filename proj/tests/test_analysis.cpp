#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fovgrid/fovgrid.hpp"

using namespace fovgrid;

namespace {

std::vector<LayerSpec> toy_stack() {
  return {{LayerKind::conv, 25, 2}, {LayerKind::pool, 9, 2}, {LayerKind::conv, 9, 1}, {LayerKind::conv, 9, 1},
          {LayerKind::conv, 9, 1}};
}

const LayerStack& foveated_stack() {
  static const LayerStack st = build_layer_stack(CmfParams::make(0.5, 8.0), 4096, toy_stack());
  return st;
}

const LayerStack& uniform_stack() {
  static const LayerStack st = build_layer_stack(CmfParams::make(50.0, 8.0), 4096, toy_stack());
  return st;
}

std::size_t nearest_unit(const SensorGrid& g, double x, double y) {
  std::size_t best = 0;
  double bd = 1e300;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.points[i].is_padding) continue;
    const double d = std::hypot(g.points[i].x - x, g.points[i].y - y);
    if (d < bd) bd = d, best = i;
  }
  return best;
}

}  // namespace

TEST(LayerStack, GridsAndNeighbourhoodsConsistent) {
  const auto& st = foveated_stack();
  ASSERT_EQ(st.depth(), 6u);
  ASSERT_EQ(st.nbhds.size(), 6u);
  for (std::size_t l = 1; l < st.depth(); ++l) {
    EXPECT_EQ(st.nbhds[l].input_grid_id, st.grids[l - 1].id());
    EXPECT_EQ(st.nbhds[l].output_grid_id, st.grids[l].id());
    EXPECT_EQ(st.nbhds[l].k, st.specs[l].k);
    const double want = static_cast<double>(st.grids[l - 1].n_active) / static_cast<double>(st.specs[l].stride * st.specs[l].stride);
    EXPECT_NEAR(static_cast<double>(st.grids[l].n_active) / want, 1.0, 0.15) << "layer " << l;
  }
  EXPECT_EQ(st.grids.back().scheme.pad_rings, 0u);
  EXPECT_GT(st.grids.front().scheme.pad_rings, 0u);
}

TEST(LayerStack, Errors) {
  EXPECT_THROW(build_layer_stack(CmfParams::make(0.5, 8.0), 500, {{LayerKind::conv, 0, 1}}), std::invalid_argument);
  EXPECT_THROW(build_layer_stack(CmfParams::make(0.5, 8.0), 500, {{LayerKind::conv, 9, 0}}), std::invalid_argument);
}

TEST(Backproject, InputLayerIsTheUnitItself) {
  const auto& st = foveated_stack();
  for (std::size_t u = 0; u < st.grids[0].size(); u += 97) {
    if (st.grids[0].points[u].is_padding) continue;
    EXPECT_EQ(rf_backproject(st, 0, u), std::vector<std::uint32_t>{static_cast<std::uint32_t>(u)});
  }
}

TEST(Backproject, FirstLayerIsItsNeighbourhood) {
  const auto st = build_layer_stack(CmfParams::make(0.5, 8.0), 1500, {{LayerKind::conv, 9, 2}});
  for (std::size_t u = 0; u < st.grids[1].size(); ++u) {
    std::set<std::uint32_t> want;
    for (std::size_t i = 0; i < 9; ++i) {
      const auto v = st.nbhds[1].index(u, i);
      if (!st.grids[0].points[v].is_padding) want.insert(v);
    }
    const auto got = rf_backproject(st, 1, u);
    EXPECT_EQ(std::vector<std::uint32_t>(want.begin(), want.end()), got) << u;
  }
}

TEST(Backproject, SizeGrowsWithLayerAtFixedLocus) {
  const auto& st = foveated_stack();
  for (const auto& [x, y] : std::vector<std::pair<double, double>>{{0.0, 0.0}, {1.0, 0.5}, {-3.0, 2.0}, {0.0, -5.5}}) {
    std::size_t prev = 0;
    for (std::size_t l = 0; l < st.depth(); ++l) {
      const auto s = rf_backproject(st, l, nearest_unit(st.grids[l], x, y)).size();
      EXPECT_GE(s, prev) << "layer " << l << " at " << x << "," << y;
      prev = s;
    }
  }
}

TEST(Backproject, CompositionIsAssociative) {
  const auto st = build_layer_stack(CmfParams::make(0.5, 8.0), 1200,
                                    {{LayerKind::conv, 9, 2}, {LayerKind::pool, 9, 1}, {LayerKind::conv, 7, 1}});
  // Two-layer reachability map from layer 2 straight to the input.
  std::vector<std::set<std::uint32_t>> two(st.grids[2].size());
  for (std::size_t u = 0; u < st.grids[2].size(); ++u) {
    if (st.grids[2].points[u].is_padding) continue;
    for (std::size_t i = 0; i < st.nbhds[2].k; ++i) {
      const auto v = st.nbhds[2].index(u, i);
      if (st.grids[1].points[v].is_padding) continue;
      for (std::size_t t = 0; t < st.nbhds[1].k; ++t) {
        const auto w = st.nbhds[1].index(v, t);
        if (!st.grids[0].points[w].is_padding) two[u].insert(w);
      }
    }
  }
  for (std::size_t u = 0; u < st.grids[3].size(); ++u) {
    std::set<std::uint32_t> want;
    for (std::size_t i = 0; i < st.nbhds[3].k; ++i) {
      const auto v = st.nbhds[3].index(u, i);
      if (!st.grids[2].points[v].is_padding) want.insert(two[v].begin(), two[v].end());
    }
    EXPECT_EQ(std::vector<std::uint32_t>(want.begin(), want.end()), rf_backproject(st, 3, u)) << u;
  }
}

TEST(Backproject, DiameterMonotoneUnderStackedLayers) {
  const auto st = build_layer_stack(CmfParams::make(0.5, 8.0), 800,
                                    {{LayerKind::conv, 9, 1}, {LayerKind::conv, 9, 1}, {LayerKind::conv, 9, 1}});
  for (std::size_t l = 1; l < st.depth(); ++l) ASSERT_EQ(st.grids[l].size() - 0, st.grids[l].size());
  for (std::size_t u = 0; u < st.grids[3].size(); ++u) {
    double prev = 0.0;
    for (std::size_t l = 1; l < st.depth(); ++l) {
      const auto& g = st.grids[l];
      const auto v = nearest_unit(g, st.grids[3].points[u].x, st.grids[3].points[u].y);
      const double d = rf_record(st, l, v).diameter;
      EXPECT_GE(d, prev - 1e-12) << "unit " << u << " layer " << l;
      prev = d;
    }
  }
}

TEST(Backproject, Errors) {
  const auto& st = foveated_stack();
  EXPECT_THROW(rf_trace(st, st.depth(), 0), std::out_of_range);
  EXPECT_THROW(rf_trace(st, 1, st.grids[1].size()), std::out_of_range);
}

TEST(ShapeFit, DiscIsRound) {
  std::vector<Vec2> pts;
  for (int y = -30; y <= 30; ++y)
    for (int x = -30; x <= 30; ++x)
      if (x * x + y * y <= 900) pts.push_back({x * 0.01, y * 0.01});
  EXPECT_NEAR(rf_shape_fit(pts).aspect_ratio, 1.0, 0.05);
}

TEST(ShapeFit, EllipseAspectAndOrientation) {
  std::vector<Vec2> pts;
  const double ang = 0.6;
  for (int i = 0; i < 360; ++i) {
    const double t = kTwoPi * i / 360.0;
    const double ex = 3.0 * std::cos(t), ey = std::sin(t);
    pts.push_back({ex * std::cos(ang) - ey * std::sin(ang), ex * std::sin(ang) + ey * std::cos(ang)});
  }
  const auto f = rf_shape_fit(pts);
  EXPECT_NEAR(f.aspect_ratio, 3.0, 0.1);
  EXPECT_NEAR(f.orientation, ang, 1e-6);
}

TEST(ShapeFit, WeightsShiftTheFit) {
  std::vector<Vec2> pts;
  std::vector<double> w;
  for (int y = -5; y <= 5; ++y)
    for (int x = -5; x <= 5; ++x) {
      pts.push_back({x * 1.0, y * 1.0});
      w.push_back(std::exp(-0.5 * (x * x / 9.0 + y * y / 1.0)));
    }
  EXPECT_NEAR(rf_shape_fit(pts).aspect_ratio, 1.0, 1e-9);
  EXPECT_GT(rf_shape_fit(pts, w).aspect_ratio, 2.0);
}

TEST(ShapeFit, ErrorsAndDegenerate) {
  std::vector<Vec2> few(7);
  EXPECT_THROW(rf_shape_fit(few), std::invalid_argument);
  std::vector<Vec2> line;
  for (int i = 0; i < 10; ++i) line.push_back({1.0 * i, 2.0 * i});
  EXPECT_TRUE(std::isinf(rf_shape_fit(line).aspect_ratio));
  std::vector<double> w(3, 1.0);
  EXPECT_THROW(rf_shape_fit(line, w), std::invalid_argument);
}

TEST(RfProfile, FoveatedSlopesAndInterceptsIncrease) {
  const auto prof = rf_diameter_profile(foveated_stack());
  ASSERT_EQ(prof.size(), 5u);
  for (std::size_t l = 1; l < prof.size(); ++l) {
    EXPECT_GT(prof[l].fit.slope, prof[l - 1].fit.slope) << "layer " << prof[l].layer;
    EXPECT_GT(prof[l].fit.intercept, prof[l - 1].fit.intercept) << "layer " << prof[l].layer;
  }
}

TEST(RfProfile, NearlyUniformStackIsFlat) {
  const auto prof = rf_diameter_profile(uniform_stack());
  for (const auto& p : prof) {
    ASSERT_GT(p.fit.n, 2u);
    EXPECT_LE(std::abs(p.fit.slope), 0.02 * p.mean_diameter) << "layer " << p.layer << " slope " << p.fit.slope
                                                                << " mean " << p.mean_diameter;
  }
}

TEST(RfProfile, DeepLayersPlateauWherePaddingDominates) {
  const auto prof = rf_diameter_profile(foveated_stack());
  const auto& top = prof.back();
  double r_max_fit = 0.0;
  for (const auto& r : top.records)
    if (!r.touches_padding) r_max_fit = std::max(r_max_fit, r.eccentricity);
  std::size_t below = 0, total = 0;
  for (const auto& r : top.records) {
    if (!r.touches_padding || r.eccentricity <= r_max_fit) continue;
    ++total;
    below += r.diameter < top.fit.intercept + top.fit.slope * r.eccentricity;
  }
  ASSERT_GT(total, 0u);
  EXPECT_GT(static_cast<double>(below) / static_cast<double>(total), 0.5);
}

TEST(RfProfile, LayerThreeAspectModeNearOne) {
  const auto prof = rf_diameter_profile(foveated_stack());
  std::vector<double> ar;
  for (const auto& r : prof[2].records) {
    EXPECT_GE(r.aspect_ratio, 1.0);
    ar.push_back(r.aspect_ratio);
  }
  const double mode = histogram_mode(ar, 1.0, 3.0, 20);
  EXPECT_GE(mode, 1.0);
  EXPECT_LE(mode, 1.3);
}

TEST(RfProfile, GaussianStatisticAvailable) {
  const auto a = rf_diameter_profile(foveated_stack(), DiameterStatistic::gaussian);
  const auto b = rf_diameter_profile(foveated_stack(), DiameterStatistic::max_extent);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t l = 0; l < a.size(); ++l) {
    EXPECT_GT(a[l].mean_diameter, 0.0);
    EXPECT_NE(a[l].mean_diameter, b[l].mean_diameter);
    EXPECT_GT(a[l].fit.slope, 0.0);
  }
}

TEST(Fits, LinearFitExact) {
  const std::vector<double> x{0.0, 1.0, 2.0, 5.0}, y{1.0, 3.5, 6.0, 13.5};
  const auto f = linear_fit(x, y);
  EXPECT_NEAR(f.slope, 2.5, 1e-12);
  EXPECT_NEAR(f.intercept, 1.0, 1e-12);
  EXPECT_EQ(f.n, 4u);
}

TEST(Fits, HistogramMode) {
  const std::vector<double> v{1.05, 1.06, 1.07, 1.5, 2.9, 7.0, NAN};
  EXPECT_NEAR(histogram_mode(v, 1.0, 3.0, 20), 1.05, 1e-12);
}

TEST(Fits, PowerLawExact) {
  std::vector<double> x, y;
  for (double v : {1.5, 2.0, 7.0, 30.0}) {
    x.push_back(v);
    y.push_back(0.3 * std::pow(v, 4.0));
  }
  const auto p = powerlaw_fit(x, y);
  EXPECT_NEAR(p.exponent, 4.0, 1e-9);
  EXPECT_NEAR(p.prefactor, 0.3, 1e-9);
}

TEST(Fits, PowerLawErrors) {
  EXPECT_THROW(powerlaw_fit(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, 2.0}), std::invalid_argument);
  EXPECT_THROW(powerlaw_fit(std::vector<double>{1.0, 2.0, 0.0}, std::vector<double>{1.0, 2.0, 3.0}),
               std::invalid_argument);
  EXPECT_THROW(powerlaw_fit(std::vector<double>{1.0, 2.0, 3.0}, std::vector<double>{1.0, -2.0, 3.0}),
               std::invalid_argument);
}

TEST(Flops, TableRatio196Vs64) {
  const VitFlopsConfig c;
  const double ratio = vit_flops(c, 196 + c.extra_tokens).total() / vit_flops(c, 64 + c.extra_tokens).total();
  EXPECT_NEAR(ratio / 3.02, 1.0, 0.05) << ratio;
}

TEST(Flops, AttentionIsExactlyQuadratic) {
  const VitFlopsConfig c;
  EXPECT_DOUBLE_EQ(vit_flops(c, 196).attention / vit_flops(c, 64).attention, (196.0 / 64.0) * (196.0 / 64.0));
}

TEST(Flops, Additive) {
  VitFlopsConfig c;
  for (bool bias : {false, true}) {
    c.include_bias = bias;
    for (std::size_t n : {6u, 69u, 201u, 4101u}) {
      const auto f = vit_flops(c, n);
      EXPECT_EQ(f.total(), f.attention + f.non_attention);
      EXPECT_GT(f.attention, 0.0);
      EXPECT_GT(f.non_attention, 0.0);
    }
  }
}

TEST(Flops, HandCount) {
  VitFlopsConfig c;
  c.embed_dim = 4;
  c.mlp_dim = 8;
  c.layers = 2;
  c.patch_dim = 3;
  c.extra_tokens = 1;
  c.num_classes = 5;
  c.gated_mlp = false;
  const auto f = vit_flops(c, 10);
  // QK^T and AV: 2 * n^2 * d MACs per layer.
  EXPECT_EQ(f.attention, 2.0 * 2.0 * (2.0 * 100.0 * 4.0));
  // Projections 4nd^2, MLP 2*n*d*mlp per layer; 9 patches * 3 * 4; head 4 * 5.
  const double macs = 2.0 * (4.0 * 10 * 16 + 2.0 * 10 * 4 * 8) + 9.0 * 3 * 4 + 4.0 * 5;
  EXPECT_EQ(f.non_attention, 2.0 * macs);
}

TEST(Flops, AttentionExponentOverResolution) {
  const VitFlopsConfig c;
  std::vector<double> m, att, other;
  for (std::size_t r : {224u, 256u, 320u, 384u, 448u, 512u, 640u, 768u, 896u, 1024u}) {
    const auto f = vit_flops(c, c.tokens_for_resolution(r));
    m.push_back(static_cast<double>(r));
    att.push_back(f.attention);
    other.push_back(f.non_attention);
  }
  const double ea = powerlaw_fit(m, att).exponent, eo = powerlaw_fit(m, other).exponent;
  EXPECT_GE(ea, 3.8);
  EXPECT_LE(ea, 4.0);
  EXPECT_GE(eo, 1.7);
  EXPECT_LE(eo, 2.0);
}

TEST(Flops, FixationCurve) {
  const VitFlopsConfig c;
  const auto rows = fixation_flops_curve(c, {64, 224}, {1, 2, 3, 20});
  ASSERT_EQ(rows.size(), 8u);
  for (std::size_t i = 0; i < rows.size(); i += 4) {
    const auto f = vit_flops(c, rows[i].tokens);
    EXPECT_EQ(rows[i].total, f.total());
    EXPECT_EQ(rows[i].attention, f.attention);
    EXPECT_DOUBLE_EQ(rows[i + 1].total, 2.0 * rows[i].total);
    EXPECT_NEAR(rows[i + 2].total / rows[i].total, 3.0, 1e-12);
  }
  EXPECT_EQ(rows[0].tokens, 69u);
  EXPECT_EQ(rows[4].tokens, 789u);
}

TEST(Flops, TwentyFixationsTwoOrdersCheaper) {
  const VitFlopsConfig c;
  const auto small = fixation_flops_curve(c, {64}, {20}).front().total;
  const auto large = fixation_flops_curve(c, {1024}, {1}).front().total;
  EXPECT_LT(small / large, 1e-2) << "ratio " << large / small;
}

TEST(Flops, Errors) {
  VitFlopsConfig c;
  EXPECT_THROW(vit_flops(c, 0), std::invalid_argument);
  c.embed_dim = 0;
  EXPECT_THROW(vit_flops(c, 10), std::invalid_argument);
}
