#pragma once

// PNG encode/decode via libpng's simplified API.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dctnet/error.hpp"
#include "dctnet/raster.hpp"
#include "dctnet/tensor.hpp"

namespace dctnet::png {

struct Raw8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> pixels;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for '" + path + "'");
}

// Decodes any PNG to 8-bit gray (channels == 1) or RGB (channels == 3).
inline Raw8 decode(const std::string& bytes, int channels) {
  if (channels != 1 && channels != 3) throw InvalidInput("decode supports 1 or 3 channels");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw DataError(std::string("undecodable PNG: ") + image.message);
  image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Raw8 out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.channels = channels;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DataError(std::string("undecodable PNG: ") + image.message);
  }
  if (out.width <= 0 || out.height <= 0) throw DataError("PNG has zero size");
  return out;
}

inline std::string encode(const Raw8& raw) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(raw.width);
  image.height = static_cast<png_uint_32>(raw.height);
  image.format = raw.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, raw.pixels.data(), 0, nullptr))
    throw DataError(std::string("PNG encode failed: ") + image.message);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, raw.pixels.data(), 0, nullptr))
    throw DataError(std::string("PNG encode failed: ") + image.message);
  out.resize(size);
  return out;
}

inline Image decode_image(const std::string& bytes) {
  const Raw8 raw = decode(bytes, 3);
  Image img(3, raw.height, raw.width);
  for (int y = 0; y < raw.height; ++y)
    for (int x = 0; x < raw.width; ++x)
      for (int c = 0; c < 3; ++c)
        img(c, y, x) = raw.pixels[(static_cast<std::size_t>(y) * raw.width + x) * 3 + c] / 255.0f;
  return img;
}

inline std::string encode_image(const Image& img) {
  if (img.channels != 3) throw InvalidInput("encode_image expects 3 channels");
  Raw8 raw{img.width, img.height, 3, std::vector<std::uint8_t>(img.size())};
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(img(c, y, x), 0.0f, 1.0f);
        raw.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  return encode(raw);
}

inline Grid<std::uint8_t> decode_gray(const std::string& bytes) {
  const Raw8 raw = decode(bytes, 1);
  Grid<std::uint8_t> g(raw.width, raw.height);
  std::copy(raw.pixels.begin(), raw.pixels.end(), g.values().begin());
  return g;
}

// 8-bit grayscale, 0 = background, 255 = foreground.
inline std::string encode_mask(const BinaryMask& m) {
  Raw8 raw{m.width(), m.height(), 1, std::vector<std::uint8_t>(m.size())};
  for (std::size_t i = 0; i < m.size(); ++i) raw.pixels[i] = m[i] ? 255 : 0;
  return encode(raw);
}

// Real-valued map in [0, 1] as 8-bit grayscale.
inline std::string encode_map(const Grid<double>& g) {
  Raw8 raw{g.width(), g.height(), 1, std::vector<std::uint8_t>(g.size())};
  for (std::size_t i = 0; i < g.size(); ++i)
    raw.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(g[i], 0.0, 1.0) * 255.0));
  return encode(raw);
}

}  // namespace dctnet::png
