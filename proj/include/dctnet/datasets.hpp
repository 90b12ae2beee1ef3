#pragma once

// Synthetic shape scenes for desk-scale experiments and a loader for
// folders of <id>.png / <id>_mask.png pairs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dctnet/error.hpp"
#include "dctnet/png_io.hpp"
#include "dctnet/raster.hpp"
#include "dctnet/tensor.hpp"

namespace dctnet {

struct Sample {
  Image image;
  BinaryMask gt;
  // Pixels excluded from IoU and never clicked (GrabCut-style boundary band).
  std::optional<BinaryMask> ignore;
  std::string id;
};

inline void validate_sample(const Sample& s) {
  if (s.image.channels != 3) throw InvalidInput("sample image must have 3 channels");
  if (!s.gt.same_size(s.image.width, s.image.height)) throw InvalidInput("sample image and mask differ in size");
  if (s.ignore && !s.ignore->same_size(s.gt)) throw InvalidInput("ignore mask differs in size");
  if (!s.gt.any()) throw InvalidInput("sample ground truth is empty");
}

namespace detail {

struct Rgb {
  float r, g, b;
};

inline Rgb random_color(std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.05f, 0.95f);
  return {u(rng), u(rng), u(rng)};
}

inline float color_distance(Rgb a, Rgb b) {
  return (std::abs(a.r - b.r) + std::abs(a.g - b.g) + std::abs(a.b - b.b)) / 3.0f;
}

// Shape test in the shape's rotated frame.
struct Shape {
  enum Kind { ellipse, rectangle, union_ } kind = ellipse;
  double cx = 0, cy = 0, a = 1, b = 1, angle = 0;
  // Second primitive (rectangle) of a union.
  double cx2 = 0, cy2 = 0, a2 = 1, b2 = 1, angle2 = 0;

  static bool inside_primitive(bool is_ellipse, double x, double y, double cx, double cy, double a, double b,
                               double angle) {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = c * dx + s * dy, v = -s * dx + c * dy;
    if (is_ellipse) return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
    return std::abs(u) <= a && std::abs(v) <= b;
  }

  bool contains(double x, double y) const {
    switch (kind) {
      case ellipse: return inside_primitive(true, x, y, cx, cy, a, b, angle);
      case rectangle: return inside_primitive(false, x, y, cx, cy, a, b, angle);
      case union_:
        return inside_primitive(true, x, y, cx, cy, a, b, angle) || inside_primitive(false, x, y, cx2, cy2, a2, b2, angle2);
    }
    return false;
  }
};

inline Shape random_shape(std::mt19937_64& rng, int size, double min_radius, double max_radius) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Shape s;
  const double pick = u01(rng);
  s.kind = pick < 0.45 ? Shape::ellipse : pick < 0.8 ? Shape::rectangle : Shape::union_;
  // Inscribed radius log-uniform so that small and large objects are equally common.
  const double inner = min_radius * std::pow(max_radius / min_radius, u01(rng));
  const double aspect = 1.0 + u01(rng);
  s.b = inner;
  s.a = std::min(inner * aspect, size / 2.0);
  s.angle = u01(rng) * std::numbers::pi;
  const double margin = std::min(s.b, size / 4.0);
  std::uniform_real_distribution<double> pos(margin, size - 1 - margin);
  s.cx = pos(rng);
  s.cy = pos(rng);
  if (s.kind == Shape::union_) {
    s.a2 = s.b * (0.5 + 0.5 * u01(rng));
    s.b2 = s.b * (0.4 + 0.4 * u01(rng));
    s.angle2 = u01(rng) * std::numbers::pi;
    const double offset = s.a * (0.6 + 0.6 * u01(rng));
    const double dir = u01(rng) * 2.0 * std::numbers::pi;
    s.cx2 = s.cx + offset * std::cos(dir);
    s.cy2 = s.cy + offset * std::sin(dir);
  }
  return s;
}

inline void paint(Image& img, const BinaryMask& region, Rgb color, float noise, std::mt19937_64& rng) {
  std::normal_distribution<float> n(0.0f, noise);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      if (!region.test(x, y)) continue;
      img(0, y, x) = color.r + n(rng);
      img(1, y, x) = color.g + n(rng);
      img(2, y, x) = color.b + n(rng);
    }
}

inline BinaryMask rasterize(const Shape& s, int size) {
  BinaryMask m(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      if (s.contains(x, y)) m.set(x, y);
  return m;
}

}  // namespace detail

// Textured background plus 1-3 random shapes; the last one drawn is the
// target object. Inscribed radii range from 2 px up to size/3.
inline std::vector<Sample> generate_synthetic(int count, int size, std::uint64_t seed) {
  if (count < 1) throw InvalidInput("count must be >= 1");
  if (size < 16 || size % 8 != 0) throw InvalidInput("size must be a multiple of 8 and at least 16");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double min_radius = 2.0, max_radius = size / 3.0;

  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Sample s;
    s.id = "synthetic_" + std::to_string(seed) + "_" + std::to_string(i);
    s.image = Image(3, size, size);
    const detail::Rgb bg = detail::random_color(rng);
    // Low-frequency gradient and a sinusoidal texture over the background.
    const double gx = (u01(rng) - 0.5) * 0.3, gy = (u01(rng) - 0.5) * 0.3;
    const double fx = 0.2 + u01(rng) * 0.8, fy = 0.2 + u01(rng) * 0.8, amp = 0.04 + u01(rng) * 0.08;
    std::normal_distribution<float> noise(0.0f, 0.03f);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double shade = gx * (x / double(size) - 0.5) + gy * (y / double(size) - 0.5) +
                             amp * std::sin(fx * x) * std::cos(fy * y);
        s.image(0, y, x) = static_cast<float>(bg.r + shade) + noise(rng);
        s.image(1, y, x) = static_cast<float>(bg.g + shade) + noise(rng);
        s.image(2, y, x) = static_cast<float>(bg.b + shade) + noise(rng);
      }

    const int shapes = 1 + static_cast<int>(u01(rng) * 3.0);
    BinaryMask target;
    for (int k = 0; k < shapes; ++k) {
      const bool is_target = k == shapes - 1;
      detail::Rgb color = detail::random_color(rng);
      for (int tries = 0; tries < 20 && detail::color_distance(color, bg) < 0.2f; ++tries) color = detail::random_color(rng);
      BinaryMask region;
      do {
        region = detail::rasterize(detail::random_shape(rng, size, min_radius, max_radius), size);
      } while (!region.any());
      detail::paint(s.image, region, color, 0.03f, rng);
      if (is_target) target = std::move(region);
    }
    for (auto& v : s.image.data) v = std::clamp(v, 0.0f, 1.0f);
    s.gt = std::move(target);
    out.push_back(std::move(s));
  }
  return out;
}

struct FolderLoadResult {
  std::vector<Sample> samples;
  std::vector<std::string> errors;  // one entry per rejected file or pair
};

inline constexpr std::uint8_t kIgnoreValue = 128;

// Mask decoding: 0 background, 128 ignore, any other nonzero value foreground.
inline void decode_mask_values(const Grid<std::uint8_t>& raw, BinaryMask& gt, std::optional<BinaryMask>& ignore) {
  gt = BinaryMask(raw.width(), raw.height());
  BinaryMask ign(raw.width(), raw.height());
  bool any_ignore = false;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == kIgnoreValue) {
      ign[i] = 1;
      any_ignore = true;
    } else if (raw[i] != 0) {
      gt[i] = 1;
    }
  }
  ignore.reset();
  if (any_ignore) ignore = std::move(ign);
}

inline FolderLoadResult load_folder(const std::string& path) {
  namespace fs = std::filesystem;
  FolderLoadResult result;
  if (!fs::is_directory(path)) throw DataError("'" + path + "' is not a directory");

  std::map<std::string, fs::path> images, masks;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    const std::string stem = entry.path().stem().string();
    if (stem.ends_with("_mask"))
      masks[stem.substr(0, stem.size() - 5)] = entry.path();
    else
      images[stem] = entry.path();
  }
  for (const auto& [id, mask_path] : masks)
    if (!images.count(id)) result.errors.push_back(mask_path.string() + ": mask without image");

  for (const auto& [id, image_path] : images) {
    const auto m = masks.find(id);
    if (m == masks.end()) {
      result.errors.push_back(image_path.string() + ": image without mask");
      continue;
    }
    try {
      Sample s;
      s.id = id;
      s.image = png::decode_image(png::read_file(image_path.string()));
      decode_mask_values(png::decode_gray(png::read_file(m->second.string())), s.gt, s.ignore);
      validate_sample(s);
      result.samples.push_back(std::move(s));
    } catch (const std::exception& e) {
      result.errors.push_back(image_path.string() + ": " + e.what());
    }
  }
  return result;
}

// Pads a sample on the right/bottom to a multiple of `multiple`. Padding
// replicates edge pixels of the image, is background in the ground truth and
// ignored for scoring.
inline Sample pad_sample(const Sample& s, int multiple = 8) {
  const int w = (s.image.width + multiple - 1) / multiple * multiple;
  const int h = (s.image.height + multiple - 1) / multiple * multiple;
  if (w == s.image.width && h == s.image.height) return s;
  Sample out;
  out.id = s.id;
  out.image = Image(3, h, w);
  out.gt = BinaryMask(w, h);
  BinaryMask ign(w, h, true);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int sx = std::min(x, s.image.width - 1), sy = std::min(y, s.image.height - 1);
      for (int c = 0; c < 3; ++c) out.image(c, y, x) = s.image(c, sy, sx);
      if (x < s.image.width && y < s.image.height) {
        out.gt(x, y) = s.gt(x, y);
        ign(x, y) = s.ignore ? (*s.ignore)(x, y) : 0;
      }
    }
  out.ignore = std::move(ign);
  return out;
}

// Right/bottom edge-replicating pad of an image to a multiple of `multiple`.
inline Image pad_image(const Image& img, int multiple = 8) {
  const int w = (img.width + multiple - 1) / multiple * multiple;
  const int h = (img.height + multiple - 1) / multiple * multiple;
  if (w == img.width && h == img.height) return img;
  Image out(3, h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out(c, y, x) = img(c, std::min(y, img.height - 1), std::min(x, img.width - 1));
  return out;
}

}  // namespace dctnet
