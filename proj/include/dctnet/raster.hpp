#pragma once

// Exact raster primitives shared by click encoding, the robot user and
// evaluation. Pixel order is row-major with the origin top-left; x is the
// column and y the row everywhere in the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "dctnet/error.hpp"
#include "dctnet/tensor.hpp"

namespace dctnet {

struct Pixel {
  int x = 0;
  int y = 0;
  bool operator==(const Pixel&) const = default;
};

// Lexicographic (y, x) order used for every deterministic tie-break.
inline bool raster_before(Pixel a, Pixel b) { return a.y != b.y ? a.y < b.y : a.x < b.x; }

template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{}) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) throw InvalidInput("grid dimensions must be positive");
    values_.assign(static_cast<std::size_t>(width) * height, fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  bool same_size(int w, int h) const { return width_ == w && height_ == h; }
  template <class U>
  bool same_size(const Grid<U>& o) const { return width_ == o.width() && height_ == o.height(); }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  T& operator()(int x, int y) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& operator()(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  std::vector<T>& values() { return values_; }
  const std::vector<T>& values() const { return values_; }

  bool operator==(const Grid&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> values_;
};

// Foreground/background mask; stored as 0/1 bytes.
class BinaryMask : public Grid<std::uint8_t> {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, bool fill = false) : Grid(width, height, fill ? 1 : 0) {}

  bool test(int x, int y) const { return (*this)(x, y) != 0; }
  void set(int x, int y, bool v = true) { (*this)(x, y) = v ? 1 : 0; }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count_if(values().begin(), values().end(), [](auto v) { return v != 0; }));
  }
  bool any() const {
    return std::any_of(values().begin(), values().end(), [](auto v) { return v != 0; });
  }
};

using DistanceMap = Grid<double>;

inline void require_valid(const BinaryMask& m) {
  if (m.width() <= 0 || m.height() <= 0 || m.size() != static_cast<std::size_t>(m.width()) * m.height())
    throw InvalidInput("mask must have positive dimensions");
}

inline void require_same_size(const BinaryMask& a, const BinaryMask& b) {
  require_valid(a);
  require_valid(b);
  if (!a.same_size(b)) throw InvalidInput("mask dimensions differ");
}

inline BinaryMask mask_xor(const BinaryMask& a, const BinaryMask& b) {
  require_same_size(a, b);
  BinaryMask out(a.width(), a.height());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] != 0) != (b[i] != 0) ? 1 : 0;
  return out;
}

inline BinaryMask threshold(const Grid<float>& prob, float level = 0.5f) {
  BinaryMask out(prob.width(), prob.height());
  for (std::size_t i = 0; i < prob.size(); ++i) out[i] = prob[i] >= level ? 1 : 0;
  return out;
}

namespace detail {

// One-dimensional squared distance transform of a sampled function
// (lower envelope of parabolas). `f` holds 0 at sites and +inf elsewhere.
inline void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                   std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    auto intersect = [&](int p) { return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p)); };
    double s = intersect(v[k]);
    // z[0] is -inf, so the loop stops at k == 0.
    while (s <= z[k]) {
      --k;
      s = intersect(v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), inf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double dq = q - v[j];
    d[q] = dq * dq + f[v[j]];
  }
}

}  // namespace detail

// Exact Euclidean distance from every foreground pixel to the nearest
// background pixel; background maps to 0. Positions outside the image count
// as background, so an all-foreground mask measures distance to the border.
inline DistanceMap edt(const BinaryMask& mask) {
  require_valid(mask);
  const int w = mask.width() + 2;
  const int h = mask.height() + 2;
  constexpr double inf = std::numeric_limits<double>::infinity();

  std::vector<double> sq(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.test(x, y)) sq[static_cast<std::size_t>(y + 1) * w + x + 1] = inf;

  const int n = std::max(w, h);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);

  f.resize(h);
  d.resize(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = sq[static_cast<std::size_t>(y) * w + x];
    detail::edt_1d(f, d, v, z);
    for (int y = 0; y < h; ++y) sq[static_cast<std::size_t>(y) * w + x] = d[y];
  }
  f.resize(w);
  d.resize(w);
  for (int y = 0; y < h; ++y) {
    std::copy_n(sq.begin() + static_cast<std::ptrdiff_t>(y) * w, w, f.begin());
    detail::edt_1d(f, d, v, z);
    std::copy_n(d.begin(), w, sq.begin() + static_cast<std::ptrdiff_t>(y) * w);
  }

  DistanceMap out(mask.width(), mask.height(), 0.0);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      out(x, y) = std::sqrt(sq[static_cast<std::size_t>(y + 1) * w + x + 1]);
  return out;
}

enum class Connectivity { four = 4, eight = 8 };

struct ComponentLabeling {
  // 0 = background, components numbered 1..K in raster order of their first pixel.
  Grid<int> labels;
  // sizes[k - 1] is the pixel count of label k.
  std::vector<std::size_t> sizes;

  int count() const { return static_cast<int>(sizes.size()); }
  std::size_t size_of(int label) const { return sizes.at(static_cast<std::size_t>(label - 1)); }
};

// Two-pass union-find labeling.
inline ComponentLabeling connected_components(const BinaryMask& mask, Connectivity conn = Connectivity::four) {
  require_valid(mask);
  const int w = mask.width();
  const int h = mask.height();
  Grid<int> provisional(w, h, 0);
  std::vector<int> parent{0};

  auto find = [&](int a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  };
  auto unite = [&](int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b)
      parent[b] = a;
    else
      parent[a] = b;
  };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.test(x, y)) continue;
      int nb[4];
      int nn = 0;
      if (x > 0 && provisional(x - 1, y)) nb[nn++] = provisional(x - 1, y);
      if (y > 0 && provisional(x, y - 1)) nb[nn++] = provisional(x, y - 1);
      if (conn == Connectivity::eight && y > 0) {
        if (x > 0 && provisional(x - 1, y - 1)) nb[nn++] = provisional(x - 1, y - 1);
        if (x + 1 < w && provisional(x + 1, y - 1)) nb[nn++] = provisional(x + 1, y - 1);
      }
      if (nn == 0) {
        const int label = static_cast<int>(parent.size());
        parent.push_back(label);
        provisional(x, y) = label;
        continue;
      }
      int best = nb[0];
      for (int i = 1; i < nn; ++i) best = std::min(best, nb[i]);
      provisional(x, y) = best;
      for (int i = 0; i < nn; ++i) unite(best, nb[i]);
    }
  }

  // Compact roots to 1..K in raster order of first appearance.
  std::vector<int> remap(parent.size(), 0);
  ComponentLabeling out{Grid<int>(w, h, 0), {}};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int p = provisional(x, y);
      if (!p) continue;
      const int root = find(p);
      if (!remap[root]) {
        out.sizes.push_back(0);
        remap[root] = static_cast<int>(out.sizes.size());
      }
      const int label = remap[root];
      out.labels(x, y) = label;
      ++out.sizes[static_cast<std::size_t>(label - 1)];
    }
  }
  return out;
}

// Bilinear interpolation of every channel of `field` at (x, y).
template <class T>
std::vector<T> bilinear_sample(const Tensor<T>& field, double x, double y) {
  if (field.width <= 0 || field.height <= 0) throw InvalidInput("empty field");
  if (!(x >= 0.0 && y >= 0.0 && x <= field.width - 1 && y <= field.height - 1))
    throw InvalidInput("sample coordinate outside the field");
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, field.width - 1);
  const int y1 = std::min(y0 + 1, field.height - 1);
  const T ax = static_cast<T>(x - x0);
  const T ay = static_cast<T>(y - y0);
  std::vector<T> out(static_cast<std::size_t>(field.channels));
  for (int c = 0; c < field.channels; ++c) {
    const T top = field(c, y0, x0) * (T(1) - ax) + field(c, y0, x1) * ax;
    const T bottom = field(c, y1, x0) * (T(1) - ax) + field(c, y1, x1) * ax;
    out[static_cast<std::size_t>(c)] = top * (T(1) - ay) + bottom * ay;
  }
  return out;
}

// Nearest-neighbour resize of a binary mask.
inline BinaryMask resize_nearest(const BinaryMask& m, int width, int height) {
  require_valid(m);
  BinaryMask out(width, height);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(m.height() - 1, static_cast<int>((y + 0.5) * m.height() / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(m.width() - 1, static_cast<int>((x + 0.5) * m.width() / width));
      out(x, y) = m(sx, sy);
    }
  }
  return out;
}

// Bilinear resize (pixel-centre aligned) of a multi-channel image.
template <class T>
Tensor<T> resize_bilinear(const Tensor<T>& in, int width, int height) {
  Tensor<T> out(in.channels, height, width);
  for (int y = 0; y < height; ++y) {
    const double sy = std::clamp((y + 0.5) * in.height / height - 0.5, 0.0, double(in.height - 1));
    for (int x = 0; x < width; ++x) {
      const double sx = std::clamp((x + 0.5) * in.width / width - 0.5, 0.0, double(in.width - 1));
      const auto v = bilinear_sample(in, sx, sy);
      for (int c = 0; c < in.channels; ++c) out(c, y, x) = v[static_cast<std::size_t>(c)];
    }
  }
  return out;
}

}  // namespace dctnet
