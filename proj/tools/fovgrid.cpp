// fovgrid command-line tool.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fovgrid/fovgrid.hpp"

using namespace fovgrid;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitComputation = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIntegrity = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  bool json = false;
};

std::string fmt2(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << v;
  return s.str();
}

void emit(const Common& c, const Json& j, const std::string& text) {
  if (c.json) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << text;
  }
}

std::ofstream open_csv(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << std::setprecision(10);
  return f;
}

// ---------------------------------------------------------------- grid

struct GridArgs {
  std::optional<double> a;
  double fov = 16.0;
  std::optional<std::size_t> target_n;
  std::optional<std::size_t> n_r;
  std::optional<std::size_t> pad_rings;
  std::size_t k_max = 9;
  bool stagger = false;
  std::string rule = "finite_difference_ceil";
  std::size_t lattice_side = 0;
  double lattice_spacing = 0.01;
  std::string out;
  std::string render;
  std::string render_flat;
};

void plot_grid(const SensorGrid& g, const fs::path& path, bool flat) {
  std::vector<Vec2> pts;
  for (const auto& p : g.points) pts.push_back(flat ? Vec2{p.flat_u, p.flat_v} : Vec2{p.x, p.y});
  auto plot = Plot::fit(800, flat ? 500 : 800, pts, false, false, !flat);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& p = g.points[i];
    const Rgb c = p.is_padding ? kGray : (p.hemifield == Hemifield::left ? palette(0) : palette(3));
    plot.point(pts[i].x, pts[i].y, c, 1);
  }
  write_png(path, plot.image());
}

SensorGrid make_grid(const GridArgs& a) {
  if (a.lattice_side > 0) {
    if (a.target_n || a.n_r) throw UsageError("--lattice-side excludes --target-n and --n-r");
    return build_lattice_grid(a.lattice_side, a.lattice_spacing, a.a.value_or(1e6), a.pad_rings.value_or(1));
  }
  if (!a.a) throw UsageError("--a is required");
  if (a.target_n.has_value() == a.n_r.has_value()) throw UsageError("exactly one of --target-n or --n-r is required");
  const auto params = CmfParams::make(*a.a, a.fov / 2.0);
  GridOptions opts;
  opts.rule = isotropy_rule_from_string(a.rule);
  opts.stagger = a.stagger;
  opts.pad_rings = a.pad_rings.value_or(default_pad_rings(a.k_max));
  const std::size_t n_r = a.n_r ? *a.n_r : search_resolution(params, *a.target_n, opts.rule);
  return build_grid(params, n_r, opts);
}

int run_grid(const Common& c, const GridArgs& a) {
  const auto g = make_grid(a);
  const auto manifest = save_grid(g, a.out);
  if (!a.render.empty()) plot_grid(g, a.render, false);
  if (!a.render_flat.empty()) plot_grid(g, a.render_flat, true);
  Json j = read_json(manifest);
  j.erase("w_values");
  j["manifest"] = manifest.string();
  std::ostringstream t;
  t << "grid " << g.id() << ": a=" << g.params.a << " r_max=" << g.params.r_max << " n_r=" << g.scheme.n_r
    << " pad_rings=" << g.scheme.pad_rings << " n_active=" << g.n_active << " n_points=" << g.size() << '\n';
  if (g.layout == GridLayout::radial) {
    t << "radii:";
    for (std::size_t i = 0; i < g.scheme.n_r; ++i) t << ' ' << g.scheme.radii[i];
    t << '\n';
  }
  t << "wrote " << manifest.string() << '\n';
  emit(c, j, t.str());
  return kExitOk;
}

// ---------------------------------------------------------------- tables

struct TablesArgs {
  std::string grid_in;
  std::string out_grid;
  std::optional<std::size_t> target_n_out;
  std::optional<std::size_t> k;
  bool min_covering = false;
  int res_multiplier = 1;
  double extent = 0.0;
  std::string out;
  bool self_test = false;
  std::optional<std::uint64_t> seed;
};

/// Dense 3x3 zero-padded convolution on the lattice versus the compiled table.
double dense_self_test(const SensorGrid& g, const NeighborhoodSet& ns, const KernelMapTable& t, std::uint64_t seed) {
  const std::size_t side = g.lattice_side, pad = g.lattice_pad, full = side + 2 * pad;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  const std::size_t cin = 3, cout = 4;
  Image img(side, side, cin);
  for (auto& v : img.data) v = u(rng);
  std::vector<float> kern(cout * cin * 9), bias(cout);
  for (auto& v : kern) v = u(rng);
  for (auto& v : bias) v = u(rng);
  const auto sig = foveate(img, g, {0.5, 0.5, 1.0});
  const auto out = apply_knn_conv(t, ns, sig, kern, bias);
  double worst = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) {
    if (g.points[j].is_padding) continue;
    const long row = static_cast<long>(j / full) - static_cast<long>(pad);
    const long col = static_cast<long>(j % full) - static_cast<long>(pad);
    for (std::size_t co = 0; co < cout; ++co) {
      double acc = bias[co];
      for (std::size_t ci = 0; ci < cin; ++ci)
        for (long dr = -1; dr <= 1; ++dr)
          for (long dc = -1; dc <= 1; ++dc) {
            const long r = row + dr, cc = col + dc;
            if (r < 0 || cc < 0 || r >= static_cast<long>(side) || cc >= static_cast<long>(side)) continue;
            // kernel rows grow northward, image rows southward
            const auto kv = static_cast<std::size_t>(1 - dr), ku = static_cast<std::size_t>(1 + dc);
            acc += static_cast<double>(kern[(co * cin + ci) * 9 + kv * 3 + ku]) *
                   img.at(static_cast<std::size_t>(r), static_cast<std::size_t>(cc), ci);
          }
      worst = std::max(worst, std::abs(acc - static_cast<double>(out.at(j, co))));
    }
  }
  return worst;
}

int run_tables(const Common& c, const TablesArgs& a) {
  if (!a.out_grid.empty() == a.target_n_out.has_value())
    throw UsageError("exactly one of --out-grid or --target-n-out is required");
  if (a.k.has_value() == a.min_covering) throw UsageError("exactly one of --k or --min-covering is required");
  if (a.self_test && !a.seed) throw UsageError("--self-test needs --seed");
  const auto in = load_grid(a.grid_in);
  SensorGrid out;
  if (!a.out_grid.empty()) {
    out = load_grid(a.out_grid);
  } else if (in.layout == GridLayout::lattice) {
    throw UsageError("--target-n-out needs a radial input grid; pass --out-grid");
  } else {
    out = build_grid(in.params, search_resolution(in.params, *a.target_n_out, in.rule), {0, in.stagger, in.rule});
  }
  const std::size_t k = a.min_covering ? min_covering_k(in, out) : *a.k;
  const auto ns = knn(in, out, k);
  const double coverage = coverage_fraction(in, ns);
  if (a.min_covering && coverage < 1.0) throw std::runtime_error("min-covering k does not cover the input");
  const auto spec = a.extent > 0.0 ? ReferenceKernelSpec::make(k, a.res_multiplier, a.extent)
                                   : ReferenceKernelSpec::for_grid(in, k, a.res_multiplier);
  const auto table = build_kernel_map(ns, spec);
  if (a.self_test && (in.layout != GridLayout::lattice || k != 9 || table.s != 3))
    throw UsageError("--self-test needs a lattice input grid with k=9 and res-multiplier 1");
  Bundle b{in, out, ns, table, spec, a.seed.value_or(0), Json::object()};
  b.metadata = {{"tool", "fovgrid tables"}, {"min_covering", a.min_covering}};
  const auto manifest = save_bundle(b, a.out);

  const double overlap = static_cast<double>(out.n_active * k) / static_cast<double>(in.n_active);
  Json j{{"bundle", manifest.string()}, {"k", k}, {"n_in_active", in.n_active}, {"n_out", out.size()},
         {"n_out_active", out.n_active}, {"coverage", coverage}, {"overlap_factor", overlap}, {"s", table.s},
         {"extent", spec.extent}, {"table_entries", table.indices.size() / 4},
         {"table_bytes", kernel_map_blob(table).size()}};
  std::ostringstream t;
  t << "k=" << k << " coverage=" << coverage * 100.0 << "% overlap_factor=" << overlap << " s=" << table.s
    << " table_entries=" << table.indices.size() / 4 << " table_bytes=" << kernel_map_blob(table).size() << '\n';
  if (a.self_test) {
    const double worst = dense_self_test(in, ns, table, *a.seed);
    const bool ok = worst <= 1e-5;
    j["self_test"] = {{"max_abs_deviation", worst}, {"pass", ok}};
    t << "self-test dense 3x3 equivalence: max_abs_deviation=" << worst << (ok ? " PASS" : " FAIL") << '\n';
    emit(c, j, t.str() + "wrote " + manifest.string() + '\n');
    return ok ? kExitOk : kExitComputation;
  }
  emit(c, j, t.str() + "wrote " + manifest.string() + '\n');
  return kExitOk;
}

// ---------------------------------------------------------------- foveate / render

struct FoveateArgs {
  std::string grid;
  std::string image;
  double cx = 0.5, cy = 0.5, scale = 1.0;
  std::string out;
  std::string backproject;
};

int run_foveate(const Common& c, const FoveateArgs& a) {
  const auto g = load_grid(a.grid);
  const auto img = read_image(a.image);
  const FixationSpec fix{a.cx, a.cy, a.scale};
  const auto sig = foveate(img, g, fix);
  const auto manifest = save_signal(sig, a.out);
  if (!a.backproject.empty()) write_image(a.backproject, backproject(sig, g, img.height, img.width));
  Json j{{"signal", manifest.string()}, {"n", sig.n}, {"channels", sig.channels}, {"grid_id", sig.grid_id}};
  emit(c, j, "foveated " + std::to_string(sig.n) + " samples x " + std::to_string(sig.channels) +
                 " channels; wrote " + manifest.string() + '\n');
  return kExitOk;
}

struct RenderArgs {
  std::string grid;
  std::string signal;
  std::string out;
  std::size_t height = 0, width = 0;
  bool flat = false;
};

int run_render(const Common& c, const RenderArgs& a) {
  const auto g = load_grid(a.grid);
  if (a.signal.empty()) {
    plot_grid(g, a.out, a.flat);
    emit(c, Json{{"png", a.out}}, "wrote " + a.out + '\n');
    return kExitOk;
  }
  const auto sig = load_signal(a.signal);
  if (sig.grid_id != g.id()) throw IntegrityError("signal was not produced on this grid");
  const std::size_t h = a.height ? a.height : sig.source_height;
  const std::size_t w = a.width ? a.width : sig.source_width;
  write_image(a.out, backproject(sig, g, h, w));
  emit(c, Json{{"png", a.out}, {"height", h}, {"width", w}}, "wrote " + a.out + '\n');
  return kExitOk;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
  std::string what;
  double a = 0.5;
  double fov = 16.0;
  std::size_t n = 4096;
  std::string stat = "max_extent";
  std::size_t native = 256;
  double scale = 1.0;
  double radius = 0.25;
  std::size_t count = 4;
  std::optional<std::uint64_t> seed;
  std::size_t k = 200;
  std::string out_dir = "analysis";
};

std::vector<LayerSpec> toy_stack() {
  return {{LayerKind::conv, 25, 2}, {LayerKind::pool, 9, 2}, {LayerKind::conv, 9, 1}, {LayerKind::conv, 9, 1},
          {LayerKind::conv, 9, 1}};
}

int run_analyze(const Common& c, const AnalyzeArgs& a) {
  if (a.what == "fixations" && !a.seed) throw UsageError("analyze fixations needs --seed");
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  const auto params = CmfParams::make(a.a, a.fov / 2.0);
  Json j;
  std::ostringstream t;
  if (a.what == "rf") {
    const auto st = build_layer_stack(params, a.n, toy_stack());
    const auto stat = a.stat == "gaussian" ? DiameterStatistic::gaussian : DiameterStatistic::max_extent;
    const auto prof = rf_diameter_profile(st, stat);
    auto csv = open_csv(dir / "rf_profile.csv");
    csv << "layer,unit,eccentricity,diameter,aspect_ratio,size,touches_padding\n";
    std::vector<Vec2> all;
    for (const auto& p : prof)
      for (const auto& r : p.records) {
        csv << r.layer << ',' << r.unit << ',' << r.eccentricity << ',' << r.diameter << ',' << r.aspect_ratio << ','
            << r.size << ',' << r.touches_padding << '\n';
        all.push_back({r.eccentricity, r.diameter});
      }
    auto plot = Plot::fit(800, 600, all);
    j["layers"] = Json::array();
    for (const auto& p : prof) {
      for (const auto& r : p.records) plot.point(r.eccentricity, r.diameter, r.touches_padding ? kGray : palette(p.layer));
      plot.line(0.0, p.fit.intercept, params.r_max, p.fit.intercept + p.fit.slope * params.r_max, palette(p.layer));
      j["layers"].push_back({{"layer", p.layer}, {"kind", to_string(st.specs[p.layer].kind)}, {"k", st.specs[p.layer].k},
                             {"stride", st.specs[p.layer].stride}, {"n_active", st.grids[p.layer].n_active},
                             {"slope", p.fit.slope}, {"intercept", p.fit.intercept}, {"n_fit", p.fit.n},
                             {"mean_diameter", p.mean_diameter}});
      t << "layer " << p.layer << ": slope=" << p.fit.slope << " intercept=" << p.fit.intercept << " n_fit=" << p.fit.n
        << " mean_diameter=" << p.mean_diameter << '\n';
    }
    write_png(dir / "rf_profile.png", plot.image());
    if (prof.size() >= 3) {
      std::vector<double> ar;
      for (const auto& r : prof[2].records) ar.push_back(r.aspect_ratio);
      const double mode = histogram_mode(ar, 1.0, 3.0, 20);
      j["layer3_aspect_mode"] = mode;
      t << "layer 3 aspect-ratio mode: " << mode << '\n';
    }
  } else if (a.what == "resolution") {
    const auto g = build_grid(params, search_resolution(params, a.n));
    const auto prof = local_resolution_profile(g, a.native, a.native, {0.5, 0.5, a.scale});
    auto csv = open_csv(dir / "resolution_profile.csv");
    csv << "ring,eccentricity,samples_per_native_pixel\n";
    std::vector<Vec2> pts;
    for (const auto& s : prof) {
      csv << s.ring << ',' << s.r << ',' << s.ratio << '\n';
      pts.push_back({s.r, s.ratio});
    }
    auto plot = Plot::fit(800, 600, pts, false, true);
    plot.polyline(pts, palette(0));
    plot.hline(1.0, kGray);
    write_png(dir / "resolution_profile.png", plot.image());
    j["center_ratio"] = prof.front().ratio;
    j["edge_ratio"] = prof.back().ratio;
    t << "samples per native pixel: center=" << prof.front().ratio << " edge=" << prof.back().ratio << '\n';
  } else if (a.what == "isotropy") {
    const auto g = build_grid(params, search_resolution(params, a.n), {8, false, IsotropyRule::finite_difference_ceil});
    const auto err = ring_isotropy_errors(g);
    std::vector<double> v;
    for (std::size_t i = 1; i + 1 < g.scheme.n_r; ++i) v.push_back(std::abs(err[i]));
    std::sort(v.begin(), v.end());
    auto csv = open_csv(dir / "isotropy.csv");
    csv << "ring,eccentricity,relative_arc_error,dr_dtheta\n";
    const auto ratio = dr_dtheta_profile(g);
    for (std::size_t i = 1; i < g.scheme.n_r; ++i)
      csv << i << ',' << g.scheme.radii[i] << ',' << err[i] << ',' << ratio[i - 1].ratio << '\n';
    const double median = v.empty() ? 0.0 : v[v.size() / 2];
    j["n_active"] = g.n_active;
    j["median_ring_error"] = median;
    t << "n_active=" << g.n_active << " median |arc - delta_w|/delta_w=" << median << '\n';
  } else if (a.what == "fixations") {
    const auto fx = sample_fixations({a.radius, a.count, *a.seed}, a.scale);
    auto csv = open_csv(dir / "fixations.csv");
    csv << "cx,cy,scale\n";
    j["fixations"] = Json::array();
    for (const auto& f : fx) {
      csv << f.cx << ',' << f.cy << ',' << f.scale << '\n';
      j["fixations"].push_back({f.cx, f.cy});
      t << f.cx << ' ' << f.cy << '\n';
    }
  } else {
    throw UsageError("unknown analysis: " + a.what);
  }
  emit(c, j, t.str());
  return kExitOk;
}

// ---------------------------------------------------------------- baselines

struct BaselinesArgs {
  std::string what;
  std::string kind = "warped";
  double a = 0.5;
  double fov = 16.0;
  std::size_t side = 64;
  std::size_t n_theta = 64;
  double r = 0.9;
  std::size_t k = 200;
  std::string out_dir = "baselines";
};

int run_baselines(const Common& c, const BaselinesArgs& a) {
  const double r_max = a.fov / 2.0;
  Json j;
  std::ostringstream t;
  if (a.what == "anisotropy") {
    if (!(a.r >= 0.0 && a.r <= 1.0)) throw UsageError("--r is a fraction of the field radius in [0, 1]");
    const double target = a.r * r_max;
    double index = 0.0;
    double at_r = 0.0;
    if (a.kind == "isotropic") {
      const auto params = CmfParams::make(a.a, r_max);
      const auto g = build_grid(params, search_resolution(params, a.side * a.side), {8, false, IsotropyRule::finite_difference_ceil});
      std::size_t best = 0;
      for (std::size_t i = 0; i < g.size(); ++i)
        if (std::abs(g.points[i].r - target) + std::abs(g.points[i].theta) <
            std::abs(g.points[best].r - target) + std::abs(g.points[best].theta))
          best = i;
      index = anisotropy_index(g, best, a.k);
      at_r = g.points[best].r;
    } else {
      const auto g = a.kind == "logpolar" ? logpolar_grid(a.a, a.side, a.n_theta, r_max)
                                          : a.kind == "warped" ? warped_cartesian_grid(a.a, a.side, r_max)
                                                               : throw UsageError("--kind is warped, logpolar or isotropic");
      // Query: eccentricity closest to the target, nearest the positive horizontal meridian on ties.
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double rr = std::hypot(g.points[i].x, g.points[i].y);
        const double d = std::abs(rr - target) + 1e-3 * std::abs(std::atan2(g.points[i].y, g.points[i].x));
        if (d < bd) bd = d, best = i;
      }
      index = anisotropy_index(g, best, a.k);
      at_r = std::hypot(g.points[best].x, g.points[best].y);
    }
    j = {{"kind", a.kind}, {"a", a.a}, {"r", at_r}, {"k", a.k}, {"anisotropy_index", index}};
    t << "anisotropy index (" << a.kind << ", r=" << at_r << " deg, k=" << a.k << "): " << index << '\n';
  } else if (a.what == "profile") {
    const fs::path dir(a.out_dir);
    fs::create_directories(dir);
    if (a.kind == "logpolar" || a.kind == "isotropic") {
      std::vector<RatioSample> prof;
      if (a.kind == "logpolar") {
        prof = dr_dtheta_profile(logpolar_grid(a.a, a.side, a.n_theta, r_max));
      } else {
        const auto params = CmfParams::make(a.a, r_max);
        prof = dr_dtheta_profile(build_grid(params, search_resolution(params, a.side * a.side)));
      }
      auto csv = open_csv(dir / (a.kind + "_dr_dtheta.csv"));
      csv << "r,dr_dtheta\n";
      std::vector<Vec2> pts;
      for (const auto& s : prof) {
        csv << s.r << ',' << s.ratio << '\n';
        pts.push_back({s.r, s.ratio});
      }
      auto plot = Plot::fit(800, 600, pts, false, true);
      plot.polyline(pts, palette(0));
      plot.hline(1.0, kGray);
      write_png(dir / (a.kind + "_dr_dtheta.png"), plot.image());
      j = {{"kind", a.kind}, {"ratio_at_r_max", prof.back().ratio}};
      t << "dr/dtheta at r_max: " << prof.back().ratio << '\n';
    } else if (a.kind == "warped") {
      const auto g = warped_cartesian_grid(a.a, a.side, r_max);
      auto csv = open_csv(dir / "warped_anisotropy.csv");
      csv << "x,y,r,anisotropy_index\n";
      std::vector<Vec2> pts;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double idx = anisotropy_index(g, i, a.k);
        const double rr = std::hypot(g.points[i].x, g.points[i].y);
        csv << g.points[i].x << ',' << g.points[i].y << ',' << rr << ',' << idx << '\n';
        pts.push_back({rr, idx});
      }
      auto plot = Plot::fit(800, 600, pts, false, true);
      for (const auto& p : pts) plot.point(p.x, p.y, palette(1));
      write_png(dir / "warped_anisotropy.png", plot.image());
      j = {{"kind", a.kind}, {"points", g.size()}};
      t << "wrote " << (dir / "warped_anisotropy.csv").string() << '\n';
    } else {
      throw UsageError("--kind is warped, logpolar or isotropic");
    }
  } else {
    throw UsageError("unknown baselines command: " + a.what);
  }
  emit(c, j, t.str());
  return kExitOk;
}

// ---------------------------------------------------------------- flops

struct FlopsArgs {
  VitFlopsConfig cfg;
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> resolutions;
  std::vector<std::size_t> fixations{1};
  std::string csv;
};

int run_flops(const Common& c, const FlopsArgs& a) {
  if (a.tokens.empty() && a.resolutions.empty()) throw UsageError("pass --tokens or --resolution");
  Json j;
  std::ostringstream t;
  t << std::setprecision(6);
  if (!a.tokens.empty()) {
    j["tokens"] = Json::array();
    std::vector<double> totals;
    for (auto n : a.tokens) {
      const auto f = vit_flops(a.cfg, n + a.cfg.extra_tokens);
      totals.push_back(f.total());
      j["tokens"].push_back({{"patch_tokens", n}, {"total_tokens", n + a.cfg.extra_tokens},
                             {"attention_gflops", f.attention / 1e9}, {"non_attention_gflops", f.non_attention / 1e9},
                             {"total_gflops", f.total() / 1e9}});
      t << "tokens=" << n << "+" << a.cfg.extra_tokens << " attention=" << f.attention / 1e9
        << " GFLOPs non_attention=" << f.non_attention / 1e9 << " GFLOPs total=" << f.total() / 1e9 << " GFLOPs\n";
    }
    if (totals.size() >= 2) {
      j["ratio"] = totals[0] / totals[1];
      t << "ratio " << a.tokens[0] << "/" << a.tokens[1] << ": " << totals[0] / totals[1] << '\n';
    }
  }
  if (!a.resolutions.empty()) {
    const auto rows = fixation_flops_curve(a.cfg, a.resolutions, a.fixations);
    j["curve"] = Json::array();
    std::unique_ptr<std::ofstream> csv;
    if (!a.csv.empty()) {
      csv = std::make_unique<std::ofstream>(open_csv(a.csv));
      *csv << "resolution,tokens,fixations,attention_flops,non_attention_flops,total_flops\n";
    }
    for (const auto& r : rows) {
      j["curve"].push_back({{"resolution", r.resolution}, {"tokens", r.tokens}, {"fixations", r.fixations},
                            {"attention", r.attention}, {"non_attention", r.non_attention}, {"total", r.total}});
      if (csv)
        *csv << r.resolution << ',' << r.tokens << ',' << r.fixations << ',' << r.attention << ',' << r.non_attention
             << ',' << r.total << '\n';
      t << "m=" << r.resolution << " tokens=" << r.tokens << " fixations=" << r.fixations
        << " total=" << r.total / 1e9 << " GFLOPs\n";
    }
    if (a.resolutions.size() >= 3) {
      std::vector<double> m, at, na;
      for (auto res : a.resolutions) {
        const auto f = vit_flops(a.cfg, a.cfg.tokens_for_resolution(res));
        m.push_back(static_cast<double>(res));
        at.push_back(f.attention);
        na.push_back(f.non_attention);
      }
      const auto pa = powerlaw_fit(m, at), pn = powerlaw_fit(m, na);
      j["attention_exponent"] = pa.exponent;
      j["non_attention_exponent"] = pn.exponent;
      t << "power-law exponents vs m: attention=" << pa.exponent << " non_attention=" << pn.exponent << '\n';
    }
  }
  emit(c, j, t.str());
  return kExitOk;
}

// ---------------------------------------------------------------- solve-a

struct SolveArgs {
  std::size_t n = 64;
  double fov = 16.0;
  ExactNOptions opts;
  std::string rule = "finite_difference_ceil";
};

int run_solve(const Common& c, SolveArgs a) {
  a.opts.rule = isotropy_rule_from_string(a.rule);
  const auto sols = solve_a_for_exact_n(a.n, a.fov / 2.0, a.opts);
  Json j = Json::array();
  std::ostringstream t, detail;
  for (std::size_t i = 0; i < sols.size(); ++i) {
    const auto& s = sols[i];
    j.push_back({{"n_r", s.n_r}, {"a", s.a}, {"a_lower", s.a_lower}, {"a_upper", s.a_upper}, {"a_rounded", fmt2(s.a)}});
    t << (i ? " " : "") << fmt2(s.a);
    detail << "  n_r=" << s.n_r << " a=" << s.a << " exact-" << a.n << " interval [" << s.a_lower << ", " << s.a_upper
           << "]\n";
  }
  emit(c, Json{{"n", a.n}, {"solutions", j}}, t.str() + '\n' + detail.str());
  return kExitOk;
}

// ---------------------------------------------------------------- reference

struct ReferenceArgs {
  std::string bundle;
  std::size_t cases = 1;
  std::size_t c_in = 3;
  std::size_t c_out = 8;
  std::optional<std::uint64_t> seed;
  std::string out;
};

/// Random (signal, kernels, bias) cases with the reference forward output, for
/// cross-language validation of a bundle.
int run_reference(const Common& c, const ReferenceArgs& a) {
  if (!a.seed) throw UsageError("reference needs --seed");
  const auto b = load_bundle(a.bundle);
  std::mt19937_64 rng(*a.seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  Json cases = Json::array();
  const std::size_t ss = b.table.s * b.table.s;
  for (std::size_t i = 0; i < a.cases; ++i) {
    FoveatedSignal sig;
    sig.grid_id = b.input.id();
    sig.n = b.input.size();
    sig.channels = a.c_in;
    sig.values.resize(sig.n * a.c_in);
    for (std::size_t p = 0; p < sig.n; ++p)
      for (std::size_t ch = 0; ch < a.c_in; ++ch) sig.at(p, ch) = b.input.points[p].is_padding ? 0.0f : normal(rng);
    std::vector<float> kern(a.c_out * a.c_in * ss), bias(a.c_out);
    for (auto& v : kern) v = normal(rng);
    for (auto& v : bias) v = normal(rng);
    const auto out = apply_knn_conv(b.table, b.nbhd, sig, kern, bias);
    const std::string stem = a.out + ".case" + std::to_string(i);
    const auto sm = save_signal(sig, stem + ".input");
    const auto om = save_signal(out, stem + ".output");
    const auto kb = float_blob(kern), bb = float_blob(bias);
    const fs::path kp = stem + ".kernels.bin", bp = stem + ".bias.bin";
    write_bytes(kp, kb);
    write_bytes(bp, bb);
    cases.push_back({{"input", sm.filename().string()}, {"output", om.filename().string()},
                     {"kernels", {{"file", kp.filename().string()}, {"bytes", kb.size()}, {"sha256", sha256_hex(kb)},
                                  {"shape", {a.c_out, a.c_in, b.table.s, b.table.s}}}},
                     {"bias", {{"file", bp.filename().string()}, {"bytes", bb.size()}, {"sha256", sha256_hex(bb)},
                               {"shape", {a.c_out}}}}});
  }
  Json j{{"format", "fovgrid.reference"}, {"version", kFormatVersion},
         {"bundle", fs::relative(fs::absolute(a.bundle), fs::absolute(fs::path(a.out)).parent_path()).string()},
         {"seed", *a.seed}, {"cases", cases}};
  const fs::path mp = a.out + ".reference.json";
  write_json(mp, j);
  emit(c, Json{{"reference", mp.string()}, {"cases", a.cases}},
       "wrote " + std::to_string(a.cases) + " reference cases to " + mp.string() + '\n');
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Foveated sensor grids, kNN-convolution tables, resampling and analyses"};
  app.set_config("--config", "", "TOML/INI config file; command-line flags take precedence");
  app.require_subcommand(1);
  Common common;
  app.add_flag("--json", common.json, "Machine-readable JSON output");

  GridArgs ga;
  auto* grid = app.add_subcommand("grid", "Build a foveated sensor grid");
  grid->add_option("--a", ga.a, "Foveation parameter a (degrees; lattice default 1e6)");
  grid->add_option("--fov", ga.fov, "Field-of-view diameter (degrees)")->capture_default_str();
  auto* tn = grid->add_option("--target-n", ga.target_n, "Largest grid not exceeding this many samples");
  grid->add_option("--n-r", ga.n_r, "Ring count")->excludes(tn);
  grid->add_option("--pad-rings", ga.pad_rings, "Padding rings (default from --k-max)");
  grid->add_option("--k-max", ga.k_max, "Largest neighbourhood the grid will serve")->capture_default_str();
  grid->add_flag("--stagger", ga.stagger, "Offset odd rings by half an angular step");
  grid->add_option("--rule", ga.rule, "Angular count rule")
      ->check(CLI::IsMember({"finite_difference_ceil", "analytic_round"}))
      ->capture_default_str();
  grid->add_option("--lattice-side", ga.lattice_side, "Square lattice arrangement with this many samples per side");
  grid->add_option("--spacing", ga.lattice_spacing, "Lattice pitch (degrees)")->capture_default_str();
  grid->add_option("--out", ga.out, "Output stem")->required();
  grid->add_option("--render", ga.render, "PNG of sensor locations in visual space");
  grid->add_option("--render-flat", ga.render_flat, "PNG of the flat complex-log chart");

  TablesArgs ta;
  auto* tables = app.add_subcommand("tables", "Compile neighbourhoods and kernel-map tables into a bundle");
  tables->add_option("--grid-in", ta.grid_in, "Input grid manifest")->required();
  tables->add_option("--out-grid", ta.out_grid, "Output grid manifest");
  tables->add_option("--target-n-out", ta.target_n_out, "Build the output grid with this sample budget");
  tables->add_option("--k", ta.k, "Neighbourhood size");
  tables->add_flag("--min-covering", ta.min_covering, "Use the smallest k covering every input sample");
  tables->add_option("--res-multiplier", ta.res_multiplier, "Reference kernel resolution (1 or 2)")
      ->check(CLI::IsMember({1, 2}))
      ->capture_default_str();
  tables->add_option("--extent", ta.extent, "Kernel extent in cortical units (default sqrt(k) * delta_w)");
  tables->add_option("--out", ta.out, "Output stem")->required();
  tables->add_flag("--self-test", ta.self_test, "Check dense 3x3 equivalence on a lattice grid");
  tables->add_option("--seed", ta.seed, "Seed for the self-test inputs");

  FoveateArgs fa;
  auto* fov = app.add_subcommand("foveate", "Sample an image through a grid");
  fov->add_option("--grid", fa.grid, "Grid manifest")->required();
  fov->add_option("--image", fa.image, "PNG/PPM/PGM image")->required()->check(CLI::ExistingFile);
  fov->add_option("--cx", fa.cx, "Fixation x in [0, 1]")->capture_default_str();
  fov->add_option("--cy", fa.cy, "Fixation y in [0, 1]")->capture_default_str();
  fov->add_option("--scale", fa.scale, "Fraction of min(H, W) spanned by the field of view")->capture_default_str();
  fov->add_option("--out", fa.out, "Output signal stem")->required();
  fov->add_option("--backproject", fa.backproject, "Also write a nearest-sample rendering (PNG/PPM)");

  RenderArgs ra;
  auto* render = app.add_subcommand("render", "Render a grid or back-project a signal");
  render->add_option("--grid", ra.grid, "Grid manifest")->required();
  render->add_option("--signal", ra.signal, "Signal manifest (omit to plot the grid)");
  render->add_option("--out", ra.out, "Output image")->required();
  render->add_option("--height", ra.height, "Canvas height (default: source)");
  render->add_option("--width", ra.width, "Canvas width (default: source)");
  render->add_flag("--flat", ra.flat, "Plot the flat chart instead of visual space");

  AnalyzeArgs aa;
  auto* analyze = app.add_subcommand("analyze", "RF, resolution, isotropy and fixation analyses");
  analyze->add_option("what", aa.what, "rf | resolution | isotropy | fixations")
      ->required()
      ->check(CLI::IsMember({"rf", "resolution", "isotropy", "fixations"}));
  analyze->add_option("--a", aa.a, "Foveation parameter a")->capture_default_str();
  analyze->add_option("--fov", aa.fov, "Field-of-view diameter (degrees)")->capture_default_str();
  analyze->add_option("--n", aa.n, "Input sample budget")->capture_default_str();
  analyze->add_option("--stat", aa.stat, "RF diameter statistic")
      ->check(CLI::IsMember({"max_extent", "gaussian"}))
      ->capture_default_str();
  analyze->add_option("--native", aa.native, "Native image side (pixels)")->capture_default_str();
  analyze->add_option("--scale", aa.scale, "Fixation scale")->capture_default_str();
  analyze->add_option("--radius", aa.radius, "Fixation zone radius")->capture_default_str();
  analyze->add_option("--count", aa.count, "Fixations to draw")->capture_default_str();
  analyze->add_option("--seed", aa.seed, "RNG seed");
  analyze->add_option("--out-dir", aa.out_dir, "Directory for CSV/PNG outputs")->capture_default_str();

  BaselinesArgs ba;
  auto* baselines = app.add_subcommand("baselines", "Log-polar and warped-Cartesian comparisons");
  baselines->add_option("what", ba.what, "anisotropy | profile")
      ->required()
      ->check(CLI::IsMember({"anisotropy", "profile"}));
  baselines->add_option("--kind", ba.kind, "warped | logpolar | isotropic")->capture_default_str();
  baselines->add_option("--a", ba.a, "Foveation parameter a")->capture_default_str();
  baselines->add_option("--fov", ba.fov, "Field-of-view diameter (degrees)")->capture_default_str();
  baselines->add_option("--side", ba.side, "Lattice side / log-polar ring count")->capture_default_str();
  baselines->add_option("--n-theta", ba.n_theta, "Log-polar angular count")->capture_default_str();
  baselines->add_option("--r", ba.r, "Query eccentricity as a fraction of the field radius")->capture_default_str();
  baselines->add_option("--k", ba.k, "Neighbours for the anisotropy index")->capture_default_str();
  baselines->add_option("--out-dir", ba.out_dir, "Directory for CSV/PNG outputs")->capture_default_str();

  FlopsArgs fl;
  auto* flops = app.add_subcommand("flops", "Analytic ViT FLOPs model");
  flops->add_option("--tokens", fl.tokens, "Patch token counts (extra tokens are added)");
  flops->add_option("--resolution", fl.resolutions, "Image side m; tokens = (m / patch_side)^2 + extra");
  flops->add_option("--fixations", fl.fixations, "Fixation counts for the curve")->capture_default_str();
  flops->add_option("--embed-dim", fl.cfg.embed_dim)->capture_default_str();
  flops->add_option("--mlp-dim", fl.cfg.mlp_dim)->capture_default_str();
  flops->add_option("--layers", fl.cfg.layers)->capture_default_str();
  flops->add_option("--heads", fl.cfg.heads)->capture_default_str();
  flops->add_option("--patch-dim", fl.cfg.patch_dim)->capture_default_str();
  flops->add_option("--extra-tokens", fl.cfg.extra_tokens)->capture_default_str();
  flops->add_option("--num-classes", fl.cfg.num_classes)->capture_default_str();
  flops->add_option("--patch-side", fl.cfg.patch_side)->capture_default_str();
  flops->add_option("--gated-mlp", fl.cfg.gated_mlp)->capture_default_str();
  flops->add_option("--include-bias", fl.cfg.include_bias)->capture_default_str();
  flops->add_option("--csv", fl.csv, "Write the fixation curve as CSV");

  SolveArgs sa;
  auto* solve = app.add_subcommand("solve-a", "Foveation values giving exactly n samples");
  solve->add_option("--n", sa.n, "Target sample count")->capture_default_str();
  solve->add_option("--fov", sa.fov, "Field-of-view diameter (degrees)")->capture_default_str();
  solve->add_option("--n-r-min", sa.opts.n_r_min)->capture_default_str();
  solve->add_option("--n-r-max", sa.opts.n_r_max)->capture_default_str();
  solve->add_option("--a-min", sa.opts.a_min)->capture_default_str();
  solve->add_option("--a-max", sa.opts.a_max)->capture_default_str();
  solve->add_option("--rule", sa.rule)
      ->check(CLI::IsMember({"finite_difference_ceil", "analytic_round"}))
      ->capture_default_str();

  ReferenceArgs rf;
  auto* ref = app.add_subcommand("reference", "Export seeded forward-pass cases for a bundle");
  ref->add_option("--bundle", rf.bundle, "Bundle manifest")->required();
  ref->add_option("--cases", rf.cases, "Number of random cases")->capture_default_str();
  ref->add_option("--c-in", rf.c_in)->capture_default_str();
  ref->add_option("--c-out", rf.c_out)->capture_default_str();
  ref->add_option("--seed", rf.seed, "RNG seed");
  ref->add_option("--out", rf.out, "Output stem")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (grid->parsed()) return run_grid(common, ga);
    if (tables->parsed()) return run_tables(common, ta);
    if (fov->parsed()) return run_foveate(common, fa);
    if (render->parsed()) return run_render(common, ra);
    if (analyze->parsed()) return run_analyze(common, aa);
    if (baselines->parsed()) return run_baselines(common, ba);
    if (flops->parsed()) return run_flops(common, fl);
    if (solve->parsed()) return run_solve(common, sa);
    if (ref->parsed()) return run_reference(common, rf);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << '\n';
    return kExitIntegrity;
  } catch (const FormatError& e) {
    std::cerr << "integrity error: " << e.what() << '\n';
    return kExitIntegrity;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DomainError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitComputation;
  }
  return kExitUsage;
}
