#pragma once

#include <openssl/evp.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fovgrid/kernel_map.hpp"
#include "fovgrid/neighborhoods.hpp"
#include "fovgrid/sampler.hpp"
#include "fovgrid/signal.hpp"

namespace fovgrid {

inline constexpr int kFormatVersion = 1;
inline constexpr std::size_t kGridRecordBytes = 62;

/// Malformed or unsupported file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Content hash mismatch.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s.push_back(hex[md[i] >> 4]);
    s.push_back(hex[md[i] & 0xF]);
  }
  return s;
}

/// Little-endian byte writer.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  const std::vector<std::uint8_t>& bytes() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint8_t u8() { return need(1), b_[pos_++]; }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw FormatError("blob shorter than its manifest declares");
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw FormatError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const fs::path& p, std::span<const std::uint8_t> bytes) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline Json read_json(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw FormatError("cannot open " + p.string());
  try {
    return Json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& p, const Json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << j.dump(2) << '\n';
}

namespace detail {

inline void check_header(const Json& j, const std::string& format) {
  if (!j.is_object() || j.value("format", "") != format) throw FormatError("expected a " + format + " manifest");
  if (j.value("version", -1) != kFormatVersion)
    throw FormatError(format + " version " + std::to_string(j.value("version", -1)) + " is not supported");
}

inline Json blob_entry(const fs::path& blob, std::span<const std::uint8_t> bytes) {
  return Json{{"file", blob.filename().string()}, {"bytes", bytes.size()}, {"sha256", sha256_hex(bytes)}};
}

/// Loads the blob referenced by a manifest and verifies size and hash.
inline std::vector<std::uint8_t> load_blob(const fs::path& manifest_path, const Json& entry) {
  const auto path = manifest_path.parent_path() / entry.at("file").get<std::string>();
  auto bytes = read_bytes(path);
  if (bytes.size() != entry.at("bytes").get<std::size_t>())
    throw IntegrityError(path.string() + ": size differs from manifest");
  if (sha256_hex(bytes) != entry.at("sha256").get<std::string>())
    throw IntegrityError(path.string() + ": SHA-256 differs from manifest");
  return bytes;
}

/// Runs a manifest parser, reporting missing or mistyped fields as FormatError.
template <class F>
auto with_manifest_errors(const fs::path& manifest_path, F&& parse) {
  try {
    return parse();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
}

inline Json params_json(const CmfParams& p) { return Json{{"a", p.a}, {"r_max", p.r_max}, {"k_a", p.k_a}}; }

inline CmfParams params_from_json(const Json& j) {
  auto p = CmfParams::make(j.at("a").get<double>(), j.at("r_max").get<double>());
  if (j.contains("k_a")) p.k_a = j.at("k_a").get<double>();
  return p;
}

}  // namespace detail

/// Paths of a manifest and its blob for a stem such as "out/input" and a kind such as "grid".
inline std::pair<fs::path, fs::path> artifact_paths(const fs::path& stem, const std::string& kind) {
  return {fs::path(stem.string() + "." + kind + ".json"), fs::path(stem.string() + "." + kind + ".bin")};
}

inline std::vector<std::uint8_t> grid_blob(const SensorGrid& g) {
  ByteWriter w;
  for (const auto& p : g.points) {
    w.f64(p.x);
    w.f64(p.y);
    w.f64(p.r);
    w.f64(p.theta);
    w.f64(p.w);
    w.f64(p.flat_u);
    w.f64(p.flat_v);
    w.u32(p.ring_index);
    w.u8(static_cast<std::uint8_t>(p.hemifield));
    w.u8(p.is_padding ? 1 : 0);
  }
  return w.bytes();
}

inline Json grid_manifest(const SensorGrid& g, const Json& blob) {
  Json j;
  j["format"] = "fovgrid.grid";
  j["version"] = kFormatVersion;
  j["grid_id"] = g.id();
  j["layout"] = g.layout == GridLayout::lattice ? "lattice" : "radial";
  j["rule"] = to_string(g.rule);
  j["stagger"] = g.stagger;
  j["params"] = detail::params_json(g.params);
  j["n_r"] = g.scheme.n_r;
  j["pad_rings"] = g.scheme.pad_rings;
  j["delta_w"] = g.scheme.delta_w;
  j["includes_pole"] = g.scheme.includes_pole;
  j["n_points"] = g.size();
  j["n_active"] = g.n_active;
  j["w_values"] = g.scheme.w_values;
  j["radii"] = g.scheme.radii;
  j["ring_counts"] = g.ring_counts;
  j["ring_offsets"] = g.ring_offsets;
  if (g.layout == GridLayout::lattice)
    j["lattice"] = {{"side", g.lattice_side}, {"pad", g.lattice_pad}, {"spacing", g.lattice_spacing}};
  j["record_bytes"] = kGridRecordBytes;
  j["blob"] = blob;
  return j;
}

/// Writes <stem>.grid.json and <stem>.grid.bin; returns the manifest path.
inline fs::path save_grid(const SensorGrid& g, const fs::path& stem) {
  const auto [mp, bp] = artifact_paths(stem, "grid");
  const auto bytes = grid_blob(g);
  write_bytes(bp, bytes);
  write_json(mp, grid_manifest(g, detail::blob_entry(bp, bytes)));
  return mp;
}

inline SensorGrid load_grid(const fs::path& manifest_path) {
  return detail::with_manifest_errors(manifest_path, [&] {
    const auto j = read_json(manifest_path);
    detail::check_header(j, "fovgrid.grid");
    const auto bytes = detail::load_blob(manifest_path, j.at("blob"));
    SensorGrid g;
    g.params = detail::params_from_json(j.at("params"));
    g.layout = j.at("layout").get<std::string>() == "lattice" ? GridLayout::lattice : GridLayout::radial;
    g.rule = isotropy_rule_from_string(j.at("rule").get<std::string>());
    g.stagger = j.at("stagger").get<bool>();
    g.scheme.n_r = j.at("n_r").get<std::size_t>();
    g.scheme.pad_rings = j.at("pad_rings").get<std::size_t>();
    g.scheme.delta_w = j.at("delta_w").get<double>();
    g.scheme.includes_pole = j.at("includes_pole").get<bool>();
    g.scheme.w_values = j.at("w_values").get<std::vector<double>>();
    g.scheme.radii = j.at("radii").get<std::vector<double>>();
    g.ring_counts = j.at("ring_counts").get<std::vector<std::uint32_t>>();
    g.ring_offsets = j.at("ring_offsets").get<std::vector<double>>();
    if (j.contains("lattice")) {
      g.lattice_side = j["lattice"].at("side").get<std::size_t>();
      g.lattice_pad = j["lattice"].at("pad").get<std::size_t>();
      g.lattice_spacing = j["lattice"].at("spacing").get<double>();
    }
    const auto n = j.at("n_points").get<std::size_t>();
    if (bytes.size() != n * kGridRecordBytes) throw FormatError("grid blob size does not match n_points");
    ByteReader r(bytes);
    g.points.resize(n);
    for (auto& p : g.points) {
      p.x = r.f64();
      p.y = r.f64();
      p.r = r.f64();
      p.theta = r.f64();
      p.w = r.f64();
      p.flat_u = r.f64();
      p.flat_v = r.f64();
      p.ring_index = r.u32();
      p.hemifield = static_cast<Hemifield>(r.u8());
      p.is_padding = r.u8() != 0;
      if (!p.is_padding) ++g.n_active;
    }
    std::uint32_t start = 0;
    for (auto c : g.ring_counts) {
      g.ring_starts.push_back(start);
      start += c;
    }
    if (start != n) throw FormatError("ring counts do not sum to n_points");
    if (g.n_active != j.at("n_active").get<std::size_t>()) throw FormatError("n_active differs from blob");
    if (g.id() != j.at("grid_id").get<std::string>()) throw IntegrityError("grid id differs from manifest");
    return g;
  });
}

inline std::vector<std::uint8_t> neighborhood_blob(const NeighborhoodSet& ns) {
  ByteWriter w;
  for (auto v : ns.indices) w.u32(v);
  for (auto v : ns.dists) w.f32(v);
  for (auto v : ns.thetas) w.f32(v);
  return w.bytes();
}

inline fs::path save_neighborhoods(const NeighborhoodSet& ns, const fs::path& stem) {
  const auto [mp, bp] = artifact_paths(stem, "nbhd");
  const auto bytes = neighborhood_blob(ns);
  write_bytes(bp, bytes);
  Json j;
  j["format"] = "fovgrid.neighborhoods";
  j["version"] = kFormatVersion;
  j["input_grid_id"] = ns.input_grid_id;
  j["output_grid_id"] = ns.output_grid_id;
  j["n_out"] = ns.n_out;
  j["k"] = ns.k;
  j["blob"] = detail::blob_entry(bp, bytes);
  write_json(mp, j);
  return mp;
}

inline NeighborhoodSet load_neighborhoods(const fs::path& manifest_path) {
  return detail::with_manifest_errors(manifest_path, [&] {
    const auto j = read_json(manifest_path);
    detail::check_header(j, "fovgrid.neighborhoods");
    const auto bytes = detail::load_blob(manifest_path, j.at("blob"));
    NeighborhoodSet ns;
    ns.input_grid_id = j.at("input_grid_id").get<std::string>();
    ns.output_grid_id = j.at("output_grid_id").get<std::string>();
    ns.n_out = j.at("n_out").get<std::size_t>();
    ns.k = j.at("k").get<std::size_t>();
    const std::size_t m = ns.n_out * ns.k;
    if (bytes.size() != m * 12) throw FormatError("neighborhood blob size does not match n_out * k");
    ByteReader r(bytes);
    ns.indices.resize(m);
    ns.dists.resize(m);
    ns.thetas.resize(m);
    for (auto& v : ns.indices) v = r.u32();
    for (auto& v : ns.dists) v = r.f32();
    for (auto& v : ns.thetas) v = r.f32();
    return ns;
  });
}

inline std::vector<std::uint8_t> kernel_map_blob(const KernelMapTable& t) {
  ByteWriter w;
  for (auto v : t.indices) w.u32(v);
  for (auto v : t.weights) w.f32(v);
  for (auto v : t.out_of_extent) w.u8(v);
  return w.bytes();
}

inline fs::path save_kernel_map(const KernelMapTable& t, const ReferenceKernelSpec& spec, const fs::path& stem) {
  const auto [mp, bp] = artifact_paths(stem, "kmap");
  const auto bytes = kernel_map_blob(t);
  write_bytes(bp, bytes);
  Json j;
  j["format"] = "fovgrid.kernel_map";
  j["version"] = kFormatVersion;
  j["n_out"] = t.n_out;
  j["k"] = t.k;
  j["s"] = t.s;
  j["extent"] = spec.extent;
  j["res_multiplier"] = spec.res_multiplier;
  j["blob"] = detail::blob_entry(bp, bytes);
  write_json(mp, j);
  return mp;
}

inline KernelMapTable load_kernel_map(const fs::path& manifest_path, ReferenceKernelSpec* spec_out = nullptr) {
  return detail::with_manifest_errors(manifest_path, [&] {
    const auto j = read_json(manifest_path);
    detail::check_header(j, "fovgrid.kernel_map");
    const auto bytes = detail::load_blob(manifest_path, j.at("blob"));
    KernelMapTable t;
    t.n_out = j.at("n_out").get<std::size_t>();
    t.k = j.at("k").get<std::size_t>();
    t.s = j.at("s").get<std::size_t>();
    const std::size_t m = t.n_out * t.k;
    if (bytes.size() != m * 33) throw FormatError("kernel map blob size does not match n_out * k");
    ByteReader r(bytes);
    t.indices.resize(m * 4);
    t.weights.resize(m * 4);
    t.out_of_extent.resize(m);
    for (auto& v : t.indices) v = r.u32();
    for (auto& v : t.weights) v = r.f32();
    for (auto& v : t.out_of_extent) v = r.u8();
    for (auto v : t.indices)
      if (v >= t.s * t.s) throw FormatError("kernel map index out of range");
    if (spec_out) {
      spec_out->k = t.k;
      spec_out->s = t.s;
      spec_out->extent = j.at("extent").get<double>();
      spec_out->res_multiplier = j.at("res_multiplier").get<int>();
    }
    return t;
  });
}

inline std::vector<std::uint8_t> float_blob(std::span<const float> v) {
  ByteWriter w;
  for (auto x : v) w.f32(x);
  return w.bytes();
}

inline std::vector<float> floats_from_blob(std::span<const std::uint8_t> b) {
  if (b.size() % 4 != 0) throw FormatError("float blob length is not a multiple of 4");
  ByteReader r(b);
  std::vector<float> v(b.size() / 4);
  for (auto& x : v) x = r.f32();
  return v;
}

/// Values are n x channels f32, row-major by sample.
inline fs::path save_signal(const FoveatedSignal& s, const fs::path& stem) {
  const auto [mp, bp] = artifact_paths(stem, "signal");
  const auto bytes = float_blob(s.values);
  write_bytes(bp, bytes);
  Json j;
  j["format"] = "fovgrid.signal";
  j["version"] = kFormatVersion;
  j["grid_id"] = s.grid_id;
  j["fixation"] = {{"cx", s.fixation.cx}, {"cy", s.fixation.cy}, {"scale", s.fixation.scale}};
  j["n"] = s.n;
  j["channels"] = s.channels;
  j["source_height"] = s.source_height;
  j["source_width"] = s.source_width;
  j["blob"] = detail::blob_entry(bp, bytes);
  write_json(mp, j);
  return mp;
}

inline FoveatedSignal load_signal(const fs::path& manifest_path) {
  return detail::with_manifest_errors(manifest_path, [&] {
    const auto j = read_json(manifest_path);
    detail::check_header(j, "fovgrid.signal");
    const auto bytes = detail::load_blob(manifest_path, j.at("blob"));
    FoveatedSignal s;
    s.grid_id = j.at("grid_id").get<std::string>();
    s.fixation.cx = j.at("fixation").at("cx").get<double>();
    s.fixation.cy = j.at("fixation").at("cy").get<double>();
    s.fixation.scale = j.at("fixation").at("scale").get<double>();
    s.n = j.at("n").get<std::size_t>();
    s.channels = j.at("channels").get<std::size_t>();
    s.source_height = j.at("source_height").get<std::size_t>();
    s.source_width = j.at("source_width").get<std::size_t>();
    s.values = floats_from_blob(bytes);
    if (s.values.size() != s.n * s.channels) throw FormatError("signal blob size does not match n * channels");
    return s;
  });
}

/// Everything a downstream consumer needs for one kNN-convolution layer.
struct Bundle {
  SensorGrid input;
  SensorGrid output;
  NeighborhoodSet nbhd;
  KernelMapTable table;
  ReferenceKernelSpec spec;
  std::uint64_t seed = 0;
  Json metadata = Json::object();
};

/// Writes every component next to `<stem>.bundle.json`, which ties them together by
/// content hash of each blob.
inline fs::path save_bundle(const Bundle& b, const fs::path& stem) {
  const auto in_m = save_grid(b.input, fs::path(stem.string() + ".input"));
  const auto out_m = save_grid(b.output, fs::path(stem.string() + ".output"));
  const auto nb_m = save_neighborhoods(b.nbhd, stem);
  const auto km_m = save_kernel_map(b.table, b.spec, stem);
  auto entry = [](const fs::path& m) {
    const auto j = read_json(m);
    return Json{{"manifest", m.filename().string()}, {"sha256", j.at("blob").at("sha256")}};
  };
  Json j;
  j["format"] = "fovgrid.bundle";
  j["version"] = kFormatVersion;
  j["params"] = detail::params_json(b.input.params);
  j["seed"] = b.seed;
  j["metadata"] = b.metadata;
  j["k"] = b.nbhd.k;
  j["n_in"] = b.input.size();
  j["n_out"] = b.nbhd.n_out;
  j["s"] = b.table.s;
  j["input_grid"] = entry(in_m);
  j["output_grid"] = entry(out_m);
  j["neighborhoods"] = entry(nb_m);
  j["kernel_map"] = entry(km_m);
  const auto mp = fs::path(stem.string() + ".bundle.json");
  write_json(mp, j);
  return mp;
}

inline Bundle load_bundle(const fs::path& manifest_path) {
  return detail::with_manifest_errors(manifest_path, [&] {
    const auto j = read_json(manifest_path);
    detail::check_header(j, "fovgrid.bundle");
    const auto dir = manifest_path.parent_path();
    auto component = [&](const char* key) {
      const auto& e = j.at(key);
      const auto m = dir / e.at("manifest").get<std::string>();
      const auto mj = read_json(m);
      if (mj.at("blob").at("sha256") != e.at("sha256"))
        throw IntegrityError(std::string(key) + ": component hash differs from bundle");
      return m;
    };
    Bundle b;
    b.input = load_grid(component("input_grid"));
    b.output = load_grid(component("output_grid"));
    b.nbhd = load_neighborhoods(component("neighborhoods"));
    b.table = load_kernel_map(component("kernel_map"), &b.spec);
    b.seed = j.value("seed", std::uint64_t{0});
    b.metadata = j.value("metadata", Json::object());
    if (b.nbhd.input_grid_id != b.input.id() || b.nbhd.output_grid_id != b.output.id())
      throw IntegrityError("neighborhoods do not reference the bundled grids");
    if (b.table.n_out != b.nbhd.n_out || b.table.k != b.nbhd.k)
      throw IntegrityError("kernel map does not match the neighborhoods");
    return b;
  });
}

}  // namespace fovgrid
