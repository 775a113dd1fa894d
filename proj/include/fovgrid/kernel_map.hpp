#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fovgrid/neighborhoods.hpp"
#include "fovgrid/sampler.hpp"
#include "fovgrid/signal.hpp"

namespace fovgrid {

/// Shared s x s Cartesian kernel. Column u grows to visual east, row v to visual north.
struct ReferenceKernelSpec {
  std::size_t k = 9;
  std::size_t s = 3;
  double extent = 0.0;
  int res_multiplier = 1;

  static ReferenceKernelSpec make(std::size_t k, int res_multiplier, double extent) {
    if (k == 0) throw std::invalid_argument("k must be positive");
    if (res_multiplier != 1 && res_multiplier != 2) throw std::invalid_argument("res_multiplier must be 1 or 2");
    if (!(extent > 0.0) || !std::isfinite(extent)) throw std::invalid_argument("kernel extent must be positive");
    ReferenceKernelSpec spec;
    spec.k = k;
    spec.res_multiplier = res_multiplier;
    spec.s = static_cast<std::size_t>(res_multiplier) *
             static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(k))));
    spec.extent = extent;
    return spec;
  }

  static ReferenceKernelSpec for_grid(const SensorGrid& input, std::size_t k, int res_multiplier = 1) {
    return make(k, res_multiplier, default_extent(input, k));
  }

  /// sqrt(k) * delta_w of the input grid.
  static double default_extent(const SensorGrid& input, std::size_t k) {
    return std::sqrt(static_cast<double>(k)) * input.delta_w();
  }

  double pitch() const { return extent / static_cast<double>(s); }
  double center() const { return (static_cast<double>(s) - 1.0) / 2.0; }
};

/// Gather table: for every (output unit, slot) four reference-kernel indices and
/// bilinear weights. Out-of-extent slots carry zero weights.
struct KernelMapTable {
  std::size_t n_out = 0;
  std::size_t k = 0;
  std::size_t s = 0;
  std::vector<std::uint32_t> indices;  // n_out * k * 4
  std::vector<float> weights;          // n_out * k * 4
  std::vector<std::uint8_t> out_of_extent;  // n_out * k

  std::size_t slot(std::size_t j, std::size_t i) const { return j * k + i; }
};

/// Kernel-space coordinates (u, v) of the k neighbours of output unit j.
inline std::vector<std::pair<double, double>> neighborhood_reference_coords(const NeighborhoodSet& nbhd, std::size_t j,
                                                                            const ReferenceKernelSpec& spec) {
  if (j >= nbhd.n_out) throw std::out_of_range("output unit out of range");
  std::vector<std::pair<double, double>> uv(nbhd.k);
  const double c = spec.center();
  const double pitch = spec.pitch();
  for (std::size_t i = 0; i < nbhd.k; ++i) {
    const double rho = static_cast<double>(nbhd.dist(j, i)) / pitch;
    const double th = static_cast<double>(nbhd.theta(j, i));
    uv[i] = {c + rho * std::cos(th), c + rho * std::sin(th)};
  }
  return uv;
}

namespace detail {

struct Bilinear {
  std::array<std::uint32_t, 4> idx{};
  std::array<float, 4> w{};
  bool out = false;
};

/// Within half a sample outside [0, s-1] clamps to the border; further is out of extent.
inline Bilinear bilinear(double u, double v, std::size_t s) {
  Bilinear b;
  const double hi = static_cast<double>(s) - 1.0;
  if (u < -0.5 || v < -0.5 || u > hi + 0.5 || v > hi + 0.5) {
    b.out = true;
    return b;
  }
  u = std::clamp(u, 0.0, hi);
  v = std::clamp(v, 0.0, hi);
  if (s == 1) {
    b.w = {1.0f, 0.0f, 0.0f, 0.0f};
    return b;
  }
  auto split = [&](double t) {
    auto i0 = static_cast<std::size_t>(std::floor(t));
    if (i0 >= s - 1) i0 = s - 2;
    return std::pair<std::size_t, double>{i0, t - static_cast<double>(i0)};
  };
  const auto [u0, fu] = split(u);
  const auto [v0, fv] = split(v);
  b.idx = {static_cast<std::uint32_t>(v0 * s + u0), static_cast<std::uint32_t>(v0 * s + u0 + 1),
           static_cast<std::uint32_t>((v0 + 1) * s + u0), static_cast<std::uint32_t>((v0 + 1) * s + u0 + 1)};
  b.w = {static_cast<float>((1.0 - fu) * (1.0 - fv)), static_cast<float>(fu * (1.0 - fv)),
         static_cast<float>((1.0 - fu) * fv), static_cast<float>(fu * fv)};
  return b;
}

}  // namespace detail

inline KernelMapTable build_kernel_map(const NeighborhoodSet& nbhd, const ReferenceKernelSpec& spec) {
  if (spec.k != nbhd.k) throw std::invalid_argument("kernel spec k does not match neighborhood k");
  KernelMapTable t;
  t.n_out = nbhd.n_out;
  t.k = nbhd.k;
  t.s = spec.s;
  t.indices.assign(t.n_out * t.k * 4, 0);
  t.weights.assign(t.n_out * t.k * 4, 0.0f);
  t.out_of_extent.assign(t.n_out * t.k, 0);
  for (std::size_t j = 0; j < t.n_out; ++j) {
    const auto uv = neighborhood_reference_coords(nbhd, j, spec);
    for (std::size_t i = 0; i < t.k; ++i) {
      const auto b = detail::bilinear(uv[i].first, uv[i].second, t.s);
      const std::size_t sl = t.slot(j, i);
      t.out_of_extent[sl] = b.out ? 1 : 0;
      for (int q = 0; q < 4; ++q) {
        t.indices[sl * 4 + q] = b.idx[q];
        t.weights[sl * 4 + q] = b.w[q];
      }
    }
  }
  return t;
}

/// The k kernel values seen by output unit j for a single s x s reference kernel.
inline std::vector<double> render_mapped_kernel(const KernelMapTable& t, std::span<const float> reference,
                                                std::size_t j) {
  if (reference.size() != t.s * t.s) throw std::invalid_argument("reference kernel must have s*s values");
  if (j >= t.n_out) throw std::out_of_range("output unit out of range");
  std::vector<double> out(t.k, 0.0);
  for (std::size_t i = 0; i < t.k; ++i) {
    const std::size_t sl = t.slot(j, i);
    double acc = 0.0;
    for (int q = 0; q < 4; ++q) acc += static_cast<double>(t.weights[sl * 4 + q]) * reference[t.indices[sl * 4 + q]];
    out[i] = acc;
  }
  return out;
}

/// kNN-convolution forward pass. `kernels` is C_out x C_in x s x s, `bias` has C_out values.
/// Accumulates in double.
inline FoveatedSignal apply_knn_conv(const KernelMapTable& t, const NeighborhoodSet& nbhd,
                                     const FoveatedSignal& input, std::span<const float> kernels,
                                     std::span<const float> bias) {
  if (t.n_out != nbhd.n_out || t.k != nbhd.k) throw std::invalid_argument("table and neighborhood shapes differ");
  const std::size_t cin = input.channels;
  const std::size_t cout = bias.size();
  const std::size_t ss = t.s * t.s;
  if (cout == 0 || kernels.size() != cout * cin * ss)
    throw std::invalid_argument("kernel tensor must be C_out x C_in x s x s");
  if (input.values.size() != input.n * cin) throw std::invalid_argument("input signal shape mismatch");
  for (auto idx : nbhd.indices)
    if (idx >= input.n) throw std::invalid_argument("neighborhood index beyond input signal");

  FoveatedSignal out;
  out.grid_id = nbhd.output_grid_id;
  out.fixation = input.fixation;
  out.n = t.n_out;
  out.channels = cout;
  out.source_height = input.source_height;
  out.source_width = input.source_width;
  out.values.assign(out.n * cout, 0.0f);

  std::vector<double> acc(cout);
  std::vector<double> mapped(cout * cin);
  for (std::size_t j = 0; j < t.n_out; ++j) {
    for (std::size_t co = 0; co < cout; ++co) acc[co] = bias[co];
    for (std::size_t i = 0; i < t.k; ++i) {
      const std::size_t sl = t.slot(j, i);
      if (t.out_of_extent[sl]) continue;
      const float* x = &input.values[nbhd.index(j, i) * cin];
      for (std::size_t m = 0; m < cout * cin; ++m) {
        const float* kern = &kernels[m * ss];
        double w = 0.0;
        for (int q = 0; q < 4; ++q) w += static_cast<double>(t.weights[sl * 4 + q]) * kern[t.indices[sl * 4 + q]];
        mapped[m] = w;
      }
      for (std::size_t co = 0; co < cout; ++co)
        for (std::size_t ci = 0; ci < cin; ++ci) acc[co] += mapped[co * cin + ci] * x[ci];
    }
    for (std::size_t co = 0; co < cout; ++co) out.values[j * cout + co] = static_cast<float>(acc[co]);
  }
  return out;
}

}  // namespace fovgrid
