#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "fovgrid/fovgrid.hpp"

namespace fovgrid::testing {

inline Image random_image(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(h, w, c);
  for (auto& v : img.data) v = u(rng);
  return img;
}

inline std::vector<float> random_floats(std::size_t n, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

/// Zero-padded dense 3x3 convolution evaluated on the lattice grid layout. Kernel rows
/// run south to north, image rows north to south. Returns n_points x C_out, zero on padding.
inline std::vector<double> dense_conv3x3(const SensorGrid& g, const Image& img, const std::vector<float>& kern,
                                         const std::vector<float>& bias) {
  const std::size_t side = g.lattice_side, pad = g.lattice_pad, full = side + 2 * pad;
  const std::size_t cin = img.channels, cout = bias.size();
  std::vector<double> out(g.size() * cout, 0.0);
  for (std::size_t j = 0; j < g.size(); ++j) {
    if (g.points[j].is_padding) continue;
    const long row = static_cast<long>(j / full) - static_cast<long>(pad);
    const long col = static_cast<long>(j % full) - static_cast<long>(pad);
    for (std::size_t co = 0; co < cout; ++co) {
      double acc = bias[co];
      for (std::size_t ci = 0; ci < cin; ++ci)
        for (long dr = -1; dr <= 1; ++dr)
          for (long dc = -1; dc <= 1; ++dc) {
            const long r = row + dr, c = col + dc;
            if (r < 0 || c < 0 || r >= static_cast<long>(side) || c >= static_cast<long>(side)) continue;
            const auto kv = static_cast<std::size_t>(1 - dr), ku = static_cast<std::size_t>(1 + dc);
            acc += static_cast<double>(kern[(co * cin + ci) * 9 + kv * 3 + ku]) *
                   img.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c), ci);
          }
      out[j * cout + co] = acc;
    }
  }
  return out;
}

inline double psnr(const std::vector<double>& a, const std::vector<double>& b, double peak = 1.0) {
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
  const double mse = se / static_cast<double>(a.size());
  return mse == 0.0 ? INFINITY : 10.0 * std::log10(peak * peak / mse);
}

}  // namespace fovgrid::testing
