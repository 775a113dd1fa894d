#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fovgrid/signal.hpp"

namespace fovgrid {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string lower_ext(const std::filesystem::path& p) {
  auto e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

inline std::string pnm_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

inline Image read_pnm(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + p.string());
  const auto magic = pnm_token(in);
  std::size_t channels;
  if (magic == "P6") channels = 3;
  else if (magic == "P5") channels = 1;
  else throw ImageIoError(p.string() + ": only binary PPM (P6) and PGM (P5) are supported");
  const auto w = std::stoul(pnm_token(in));
  const auto h = std::stoul(pnm_token(in));
  const auto maxval = std::stoul(pnm_token(in));
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) throw ImageIoError(p.string() + ": bad header");
  Image img(h, w, channels);
  const std::size_t bps = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(img.data.size() * bps);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw ImageIoError(p.string() + ": truncated pixel data");
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const unsigned v = bps == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
    img.data[i] = static_cast<float>(v) / static_cast<float>(maxval);
  }
  return img;
}

inline Image read_png(const std::filesystem::path& p) {
  png_image im{};
  im.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&im, p.string().c_str()))
    throw ImageIoError(p.string() + ": " + im.message);
  const bool color = (im.format & PNG_FORMAT_FLAG_COLOR) != 0;
  im.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(im));
  if (!png_image_finish_read(&im, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&im);
    throw ImageIoError(p.string() + ": " + im.message);
  }
  Image img(im.height, im.width, color ? 3 : 1);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(buf[i]) / 255.0f;
  return img;
}

inline std::uint8_t to_byte(float v) {
  if (!std::isfinite(v)) return 0;
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace detail

/// Reads PNG, binary PPM or binary PGM into [0, 1] floats.
inline Image read_image(const std::filesystem::path& p) {
  const auto e = detail::lower_ext(p);
  if (e == ".png") return detail::read_png(p);
  if (e == ".ppm" || e == ".pgm" || e == ".pnm") return detail::read_pnm(p);
  throw ImageIoError(p.string() + ": unsupported image extension");
}

/// Writes 8-bit PNG (1 or 3 channels; other counts keep the first one or three).
inline void write_png(const std::filesystem::path& p, const Image& img) {
  if (img.empty()) throw ImageIoError("cannot write an empty image");
  const std::size_t out_c = img.channels >= 3 ? 3 : 1;
  std::vector<png_byte> buf(img.height * img.width * out_c);
  for (std::size_t i = 0; i < img.height * img.width; ++i)
    for (std::size_t c = 0; c < out_c; ++c) buf[i * out_c + c] = detail::to_byte(img.data[i * img.channels + c]);
  png_image im{};
  im.version = PNG_IMAGE_VERSION;
  im.width = static_cast<png_uint_32>(img.width);
  im.height = static_cast<png_uint_32>(img.height);
  im.format = out_c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  if (!png_image_write_to_file(&im, p.string().c_str(), 0, buf.data(), 0, nullptr))
    throw ImageIoError(p.string() + ": " + im.message);
}

/// Writes binary PPM (3 channels) or PGM (1 channel) at 8 bits.
inline void write_pnm(const std::filesystem::path& p, const Image& img) {
  if (img.empty()) throw ImageIoError("cannot write an empty image");
  const std::size_t out_c = img.channels >= 3 ? 3 : 1;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ImageIoError("cannot write " + p.string());
  f << (out_c == 3 ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << "\n255\n";
  for (std::size_t i = 0; i < img.height * img.width; ++i)
    for (std::size_t c = 0; c < out_c; ++c) f.put(static_cast<char>(detail::to_byte(img.data[i * img.channels + c])));
}

inline void write_image(const std::filesystem::path& p, const Image& img) {
  const auto e = detail::lower_ext(p);
  if (e == ".png") return write_png(p, img);
  if (e == ".ppm" || e == ".pgm" || e == ".pnm") return write_pnm(p, img);
  throw ImageIoError(p.string() + ": unsupported image extension");
}

}  // namespace fovgrid
