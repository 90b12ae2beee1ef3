#pragma once

#include <cstddef>
#include <vector>

#include "dctnet/error.hpp"

namespace dctnet {

// Dense channel-major (C, H, W) array. Vectors are stored as (N, 1, 1).
template <class T>
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int c, int h, int w, T fill = T(0))
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {
    if (c <= 0 || h <= 0 || w <= 0) throw InvalidInput("tensor dimensions must be positive");
  }

  static Tensor vector(std::vector<T> values) {
    Tensor t(static_cast<int>(values.size()), 1, 1);
    t.data = std::move(values);
    return t;
  }

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  T& operator()(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  const T& operator()(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  T* channel(int c) { return data.data() + static_cast<std::size_t>(c) * plane(); }
  const T* channel(int c) const { return data.data() + static_cast<std::size_t>(c) * plane(); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.channels = channels;
    out.height = height;
    out.width = width;
    out.data.assign(data.begin(), data.end());
    return out;
  }
};

// RGB image, values in [0, 1].
using Image = Tensor<float>;

}  // namespace dctnet
