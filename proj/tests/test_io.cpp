#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "fovgrid/fovgrid.hpp"
#include "support.hpp"

using namespace fovgrid;
namespace fs = std::filesystem;

namespace {

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("fovgrid_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  static void flip_byte(const fs::path& p, std::size_t at) {
    auto b = read_bytes(p);
    b.at(at) ^= 0x5A;
    write_bytes(p, b);
  }

  static void edit_json(const fs::path& p, const std::function<void(Json&)>& f) {
    auto j = read_json(p);
    f(j);
    write_json(p, j);
  }

  fs::path dir_;
};

SensorGrid grid_for(double a, std::size_t target, std::size_t pad, bool stagger = false) {
  const auto p = CmfParams::make(a, 8.0);
  return build_grid(p, search_resolution(p, target), {pad, stagger, IsotropyRule::finite_difference_ceil});
}

void expect_same_grid(const SensorGrid& a, const SensorGrid& b) {
  EXPECT_EQ(a.id(), b.id());
  EXPECT_EQ(grid_blob(a), grid_blob(b));
  EXPECT_EQ(a.n_active, b.n_active);
  EXPECT_EQ(a.ring_counts, b.ring_counts);
  EXPECT_EQ(a.ring_starts, b.ring_starts);
  EXPECT_EQ(a.scheme.radii, b.scheme.radii);
  EXPECT_EQ(a.scheme.w_values, b.scheme.w_values);
  EXPECT_EQ(a.scheme.delta_w, b.scheme.delta_w);
  EXPECT_EQ(a.params.a, b.params.a);
  EXPECT_EQ(a.params.k_a, b.params.k_a);
  EXPECT_EQ(a.stagger, b.stagger);
  EXPECT_EQ(a.rule, b.rule);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(std::memcmp(&a.points[i].x, &b.points[i].x, sizeof(double)), 0);
    EXPECT_EQ(a.points[i].is_padding, b.points[i].is_padding);
    EXPECT_EQ(a.points[i].hemifield, b.points[i].hemifield);
  }
}

}  // namespace

TEST(Sha256, KnownVector) {
  const std::string s = "abc";
  EXPECT_EQ(sha256_hex({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_F(IoTest, GridRecordLayout) {
  const auto g = grid_for(0.5, 300, 2);
  const auto b = grid_blob(g);
  ASSERT_EQ(b.size(), g.size() * kGridRecordBytes);
  const std::size_t i = 17;
  const auto* rec = b.data() + i * kGridRecordBytes;
  double x, w;
  std::memcpy(&x, rec, 8);
  std::memcpy(&w, rec + 32, 8);
  EXPECT_EQ(x, g.points[i].x);
  EXPECT_EQ(w, g.points[i].w);
  std::uint32_t ring;
  std::memcpy(&ring, rec + 56, 4);
  EXPECT_EQ(ring, g.points[i].ring_index);
  EXPECT_EQ(rec[61], g.points[i].is_padding ? 1 : 0);
}

TEST_F(IoTest, GridRoundTrip) {
  for (const auto& g : {grid_for(0.5, 1000, 3), grid_for(2.79, 4096, 0, true), build_lattice_grid(12, 0.05)}) {
    const auto m = save_grid(g, dir_ / "g");
    const auto back = load_grid(m);
    expect_same_grid(g, back);
    EXPECT_EQ(g.layout, back.layout);
    EXPECT_EQ(g.lattice_side, back.lattice_side);
    EXPECT_EQ(g.lattice_spacing, back.lattice_spacing);
  }
}

TEST_F(IoTest, NeighborhoodRoundTrip) {
  const auto in = grid_for(0.5, 1500, 3), out = grid_for(0.5, 200, 0);
  const auto ns = knn(in, out, 11);
  const auto back = load_neighborhoods(save_neighborhoods(ns, dir_ / "n"));
  EXPECT_EQ(neighborhood_blob(ns), neighborhood_blob(back));
  EXPECT_EQ(ns.indices, back.indices);
  EXPECT_EQ(ns.input_grid_id, back.input_grid_id);
  EXPECT_EQ(ns.output_grid_id, back.output_grid_id);
  EXPECT_EQ(ns.k, back.k);
  EXPECT_EQ(ns.n_out, back.n_out);
}

TEST_F(IoTest, KernelMapRoundTrip) {
  const auto in = grid_for(0.5, 1500, 3), out = grid_for(0.5, 200, 0);
  const auto ns = knn(in, out, 9);
  const auto spec = ReferenceKernelSpec::for_grid(in, 9, 2);
  const auto t = build_kernel_map(ns, spec);
  ReferenceKernelSpec sb;
  const auto back = load_kernel_map(save_kernel_map(t, spec, dir_ / "k"), &sb);
  EXPECT_EQ(kernel_map_blob(t), kernel_map_blob(back));
  EXPECT_EQ(sb.k, spec.k);
  EXPECT_EQ(sb.s, spec.s);
  EXPECT_EQ(sb.extent, spec.extent);
  EXPECT_EQ(sb.res_multiplier, spec.res_multiplier);
  EXPECT_EQ(kernel_map_blob(t).size(), t.n_out * t.k * 33);
}

TEST_F(IoTest, SignalRoundTrip) {
  const auto g = grid_for(0.5, 800, 2);
  const auto s = foveate(fovgrid::testing::random_image(30, 40, 3, 2), g, {0.4, 0.55, 0.9});
  const auto back = load_signal(save_signal(s, dir_ / "s"));
  EXPECT_EQ(back.values, s.values);
  EXPECT_EQ(back.grid_id, s.grid_id);
  EXPECT_EQ(back.fixation.cx, s.fixation.cx);
  EXPECT_EQ(back.fixation.cy, s.fixation.cy);
  EXPECT_EQ(back.fixation.scale, s.fixation.scale);
  EXPECT_EQ(back.n, s.n);
  EXPECT_EQ(back.channels, s.channels);
  EXPECT_EQ(back.source_height, 30u);
  EXPECT_EQ(back.source_width, 40u);
}

TEST_F(IoTest, BundleRoundTrip) {
  Bundle b;
  b.input = grid_for(2.79, 2000, default_pad_rings(9));
  b.output = grid_for(2.79, 250, 0);
  b.nbhd = knn(b.input, b.output, 9);
  b.spec = ReferenceKernelSpec::for_grid(b.input, 9);
  b.table = build_kernel_map(b.nbhd, b.spec);
  b.seed = 1234;
  b.metadata = {{"note", "x"}};
  const auto m = save_bundle(b, dir_ / "layer");
  const auto back = load_bundle(m);
  expect_same_grid(b.input, back.input);
  expect_same_grid(b.output, back.output);
  EXPECT_EQ(neighborhood_blob(b.nbhd), neighborhood_blob(back.nbhd));
  EXPECT_EQ(kernel_map_blob(b.table), kernel_map_blob(back.table));
  EXPECT_EQ(back.seed, 1234u);
  EXPECT_EQ(back.metadata.at("note"), "x");
  EXPECT_EQ(back.spec.extent, b.spec.extent);
}

TEST_F(IoTest, CorruptedBlobIsIntegrityError) {
  const auto g = grid_for(0.5, 500, 2);
  const auto m = save_grid(g, dir_ / "g");
  flip_byte(artifact_paths(dir_ / "g", "grid").second, 100);
  EXPECT_THROW(load_grid(m), IntegrityError);

  const auto ns = knn(g, grid_for(0.5, 50, 0), 5);
  const auto nm = save_neighborhoods(ns, dir_ / "n");
  flip_byte(artifact_paths(dir_ / "n", "nbhd").second, 3);
  EXPECT_THROW(load_neighborhoods(nm), IntegrityError);

  const auto s = foveate(Image(8, 8, 1, 0.5f), g, {});
  const auto sm = save_signal(s, dir_ / "s");
  auto bytes = read_bytes(artifact_paths(dir_ / "s", "signal").second);
  bytes.pop_back();
  write_bytes(artifact_paths(dir_ / "s", "signal").second, bytes);
  EXPECT_THROW(load_signal(sm), IntegrityError);
}

TEST_F(IoTest, CorruptedKernelMapInBundle) {
  Bundle b;
  b.input = grid_for(0.5, 800, default_pad_rings(7));
  b.output = grid_for(0.5, 100, 0);
  b.nbhd = knn(b.input, b.output, 7);
  b.spec = ReferenceKernelSpec::for_grid(b.input, 7);
  b.table = build_kernel_map(b.nbhd, b.spec);
  const auto m = save_bundle(b, dir_ / "b");
  flip_byte(artifact_paths(dir_ / "b", "kmap").second, 10);
  EXPECT_THROW(load_bundle(m), IntegrityError);
}

TEST_F(IoTest, BundleComponentSwapIsIntegrityError) {
  Bundle b;
  b.input = grid_for(0.5, 800, default_pad_rings(7));
  b.output = grid_for(0.5, 100, 0);
  b.nbhd = knn(b.input, b.output, 7);
  b.spec = ReferenceKernelSpec::for_grid(b.input, 7);
  b.table = build_kernel_map(b.nbhd, b.spec);
  const auto m = save_bundle(b, dir_ / "b");
  // A valid grid saved over the output component no longer matches the bundle hash.
  save_grid(grid_for(0.5, 120, 0), dir_ / "b.output");
  EXPECT_THROW(load_bundle(m), IntegrityError);
}

TEST_F(IoTest, VersionAndFormatChecked) {
  const auto g = grid_for(0.5, 300, 0);
  const auto m = save_grid(g, dir_ / "g");
  edit_json(m, [](Json& j) { j["version"] = kFormatVersion + 1; });
  EXPECT_THROW(load_grid(m), FormatError);
  edit_json(m, [](Json& j) { j["version"] = kFormatVersion; });
  EXPECT_NO_THROW(load_grid(m));
  edit_json(m, [](Json& j) { j["format"] = "fovgrid.signal"; });
  EXPECT_THROW(load_grid(m), FormatError);
  EXPECT_THROW(load_signal(m), FormatError);

  const auto s = foveate(Image(8, 8, 1, 0.5f), g, {});
  const auto sm = save_signal(s, dir_ / "s");
  edit_json(sm, [](Json& j) { j.erase("version"); });
  EXPECT_THROW(load_signal(sm), FormatError);
}

TEST_F(IoTest, ManifestInconsistencyIsFormatError) {
  const auto g = grid_for(0.5, 300, 0);
  const auto m = save_grid(g, dir_ / "g");
  edit_json(m, [](Json& j) { j["n_points"] = j["n_points"].get<std::size_t>() + 1; });
  EXPECT_THROW(load_grid(m), FormatError);
}

TEST_F(IoTest, MissingOrMalformedFile) {
  EXPECT_THROW(load_grid(dir_ / "nope.grid.json"), std::runtime_error);
  std::ofstream(dir_ / "bad.json") << "{ not json";
  EXPECT_THROW(read_json(dir_ / "bad.json"), FormatError);
}

TEST_F(IoTest, FloatBlob) {
  const std::vector<float> v{1.0f, -2.5f, 3.25e-7f};
  const auto b = float_blob(v);
  ASSERT_EQ(b.size(), 12u);
  EXPECT_EQ(floats_from_blob(b), v);
  EXPECT_THROW(floats_from_blob(std::vector<std::uint8_t>(5)), FormatError);
}
