#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dctnet/error.hpp"
#include "dctnet/raster.hpp"

namespace dctnet {

enum class Polarity { negative = 0, positive = 1 };

inline const char* to_string(Polarity p) { return p == Polarity::positive ? "positive" : "negative"; }

inline Polarity polarity_from_string(const std::string& s) {
  if (s == "positive" || s == "pos" || s == "1") return Polarity::positive;
  if (s == "negative" || s == "neg" || s == "0") return Polarity::negative;
  throw InvalidInput("unknown polarity '" + s + "'");
}

struct Click {
  double x = 0.0;
  double y = 0.0;
  Polarity polarity = Polarity::positive;
  // Diffusion distance from a drag gesture or the auto-drag head.
  std::optional<double> radius;

  bool positive() const { return polarity == Polarity::positive; }
  bool operator==(const Click&) const = default;
};

inline void validate_click(const Click& c, int width, int height) {
  if (!(c.x >= 0.0 && c.y >= 0.0 && c.x <= width - 1 && c.y <= height - 1))
    throw InvalidInput("click outside image bounds");
  if (c.radius && !(*c.radius > 0.0 && std::isfinite(*c.radius))) throw InvalidInput("click radius must be positive");
}

enum class EncodingKind { euclidean, fixed_gaussian, dynamic_gaussian };

inline const char* to_string(EncodingKind k) {
  switch (k) {
    case EncodingKind::euclidean: return "euclidean";
    case EncodingKind::fixed_gaussian: return "fixed_gaussian";
    case EncodingKind::dynamic_gaussian: return "dynamic_gaussian";
  }
  return "unknown";
}

inline EncodingKind encoding_from_string(const std::string& s) {
  if (s == "euclidean") return EncodingKind::euclidean;
  if (s == "fixed_gaussian") return EncodingKind::fixed_gaussian;
  if (s == "dynamic_gaussian") return EncodingKind::dynamic_gaussian;
  throw InvalidInput("unknown encoding kind '" + s + "'");
}

struct InteractionMaps {
  Grid<double> positive;
  Grid<double> negative;
  EncodingKind kind = EncodingKind::dynamic_gaussian;

  int width() const { return positive.width(); }
  int height() const { return positive.height(); }
};

// Euclidean distances saturate here before normalisation to [0, 1].
inline constexpr double kEuclideanClamp = 255.0;

namespace detail {

inline double squared_distance(int x, int y, const Click& c) {
  const double dx = x - c.x;
  const double dy = y - c.y;
  return dx * dx + dy * dy;
}

}  // namespace detail

// Identical transform for every click: min distance to the polarity's clicks,
// either clamped/normalised Euclidean or a fixed-width Gaussian of it.
inline InteractionMaps encode_fixed(std::span<const Click> clicks, int width, int height, EncodingKind kind,
                                    double fixed_sigma = 10.0) {
  if (width <= 0 || height <= 0) throw InvalidInput("map dimensions must be positive");
  if (kind == EncodingKind::dynamic_gaussian) throw InvalidInput("encode_fixed does not produce dynamic maps");
  if (kind == EncodingKind::fixed_gaussian && !(fixed_sigma > 0.0)) throw InvalidInput("fixed_sigma must be > 0");
  for (const auto& c : clicks) validate_click(c, width, height);

  const double empty = kind == EncodingKind::euclidean ? 1.0 : 0.0;
  InteractionMaps maps{Grid<double>(width, height, empty), Grid<double>(width, height, empty), kind};
  for (const Polarity pol : {Polarity::positive, Polarity::negative}) {
    Grid<double>& map = pol == Polarity::positive ? maps.positive : maps.negative;
    bool any = false;
    for (const auto& c : clicks) any |= c.polarity == pol;
    if (!any) continue;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : clicks)
          if (c.polarity == pol) best = std::min(best, detail::squared_distance(x, y, c));
        if (kind == EncodingKind::euclidean)
          map(x, y) = std::min(std::sqrt(best), kEuclideanClamp) / kEuclideanClamp;
        else
          map(x, y) = std::exp(-best / (2.0 * fixed_sigma * fixed_sigma));
      }
    }
  }
  return maps;
}

// Per-click Gaussian with sigma equal to the click's own radius; clicks of
// one polarity compose by per-pixel max.
inline InteractionMaps encode_dynamic(std::span<const Click> clicks, int width, int height) {
  if (width <= 0 || height <= 0) throw InvalidInput("map dimensions must be positive");
  for (const auto& c : clicks) {
    validate_click(c, width, height);
    if (!c.radius) throw InvalidInput("dynamic encoding needs a radius for every click");
  }
  InteractionMaps maps{Grid<double>(width, height, 0.0), Grid<double>(width, height, 0.0),
                       EncodingKind::dynamic_gaussian};
  for (const auto& c : clicks) {
    Grid<double>& map = c.positive() ? maps.positive : maps.negative;
    const double two_sigma_sq = 2.0 * *c.radius * *c.radius;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double v = std::exp(-detail::squared_distance(x, y, c) / two_sigma_sq);
        map(x, y) = std::max(map(x, y), v);
      }
  }
  return maps;
}

// Dispatch used by the network input path. Fixed kinds ignore radii.
inline InteractionMaps encode(std::span<const Click> clicks, int width, int height, EncodingKind kind,
                              double fixed_sigma = 10.0) {
  if (kind == EncodingKind::dynamic_gaussian) return encode_dynamic(clicks, width, height);
  return encode_fixed(clicks, width, height, kind, fixed_sigma);
}

}  // namespace dctnet
