#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fovgrid {

/// Interleaved H x W x C float image, row-major from the top row.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, float fill = 0.0f)
      : height(h), width(w), channels(c), data(h * w * c, fill) {}

  float& at(std::size_t y, std::size_t x, std::size_t c) { return data[(y * width + x) * channels + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c) const { return data[(y * width + x) * channels + c]; }
  bool empty() const { return height == 0 || width == 0 || channels == 0; }
};

/// Where the sensor looks. Centre in normalized image coordinates; `scale` is the
/// fraction of min(H, W) covered by the field-of-view diameter.
struct FixationSpec {
  double cx = 0.5;
  double cy = 0.5;
  double scale = 1.0;

  void validate() const {
    if (!(scale > 0.0)) throw std::invalid_argument("fixation scale must be positive");
    if (!(cx >= 0.0 && cx <= 1.0 && cy >= 0.0 && cy <= 1.0))
      throw std::invalid_argument("fixation centre must lie inside the image");
  }
};

/// Per-sample features for one fixation: n x channels, row-major by sample.
struct FoveatedSignal {
  std::string grid_id;
  FixationSpec fixation;
  std::size_t n = 0;
  std::size_t channels = 0;
  std::vector<float> values;
  std::size_t source_height = 0;
  std::size_t source_width = 0;

  float& at(std::size_t i, std::size_t c) { return values[i * channels + c]; }
  float at(std::size_t i, std::size_t c) const { return values[i * channels + c]; }
};

}  // namespace fovgrid
