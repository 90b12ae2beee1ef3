#pragma once

// Tape-based reverse-mode differentiation over (C, H, W) tensors.
//
// Nodes are appended in evaluation order, so the tape is already a
// topological order and backward() simply walks it in reverse. Every op
// records a closure only when one of its inputs needs a gradient.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dctnet/error.hpp"
#include "dctnet/tensor.hpp"

namespace dctnet::ag {

template <class T>
struct Parameter {
  std::string name;
  std::vector<int> dims;
  std::vector<T> value;
  // Gradient accumulator; mutable so read-only models can still be bound
  // to a tape (untracked bindings never touch it).
  mutable std::vector<T> grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<int> d) : name(std::move(n)), dims(std::move(d)) {
    std::size_t count = 1;
    for (int v : dims) count *= static_cast<std::size_t>(v);
    value.assign(count, T(0));
    grad.assign(count, T(0));
  }

  std::size_t size() const { return value.size(); }
  void zero_grad() const { std::fill(grad.begin(), grad.end(), T(0)); }
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <class T>
class Graph {
 public:
  using Backward = std::function<void(Graph&)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor<T> value) { return push(std::move(value), false, nullptr); }

  // Leaf bound to a parameter; gradients flow back into `p.grad`.
  // With `track == false` the parameter is read as a constant.
  Var parameter(const Parameter<T>& p, int c, int h, int w, bool track = true) {
    if (static_cast<std::size_t>(c) * h * w != p.size()) throw InvalidInput("parameter view shape mismatch: " + p.name);
    Tensor<T> t;
    t.channels = c;
    t.height = h;
    t.width = w;
    t.data = p.value;
    if (!track) return constant(std::move(t));
    const Parameter<T>* target = &p;
    const int id = static_cast<int>(nodes_.size());
    return push(std::move(t), true, [target, id](Graph& g) {
      const auto& gr = g.nodes_[static_cast<std::size_t>(id)].grad;
      for (std::size_t i = 0; i < gr.size(); ++i) target->grad[i] += gr[i];
    });
  }

  const Tensor<T>& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient buffer of a node; allocated on first touch.
  std::vector<T>& grad(Var v) {
    auto& n = node(v);
    if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
    return n.grad;
  }

  Var push(Tensor<T> value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, std::move(backward)});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  void backward(Var loss) {
    if (!loss.valid() || static_cast<std::size_t>(loss.id) >= nodes_.size())
      throw StateError("backward called without a completed forward pass");
    if (backward_done_) throw StateError("backward already ran on this graph");
    auto& root = node(loss);
    if (root.value.size() != 1) throw InvalidInput("backward needs a scalar loss");
    backward_done_ = true;
    if (!root.requires_grad) return;
    grad(loss)[0] = T(1);
    for (int i = loss.id; i >= 0; --i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
      n.backward(*this);
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    Backward backward;
  };

  Node& node(Var v) {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) throw StateError("invalid graph variable");
    return nodes_[static_cast<std::size_t>(v.id)];
  }
  const Node& node(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) throw StateError("invalid graph variable");
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

namespace detail {

// Eigen's vectorized kernels peel according to the runtime alignment of
// their operands, so products over heap buffers of arbitrary alignment can
// round differently from run to run. Products therefore run on Eigen-owned
// (consistently aligned) copies.
template <class T>
RowMatrix<T> owned(const std::vector<T>& v, int rows, int cols) {
  return ConstMatrixMap<T>(v.data(), rows, cols);
}

template <class T>
void store(const RowMatrix<T>& m, std::vector<T>& dst) {
  std::copy(m.data(), m.data() + m.size(), dst.begin());
}

template <class T>
void accumulate(const RowMatrix<T>& m, std::vector<T>& dst) {
  const T* src = m.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

// 2-D convolution. `weight` is viewed as (out_channels, in_channels, k*k),
// `bias` as (out_channels, 1, 1); pass an invalid Var for no bias. Zero padding.
template <class T>
Var conv2d(Graph<T>& g, Var x, Var weight, Var bias, int kernel, int stride, int pad) {
  const Tensor<T>& in = g.value(x);
  const Tensor<T>& w = g.value(weight);
  if (w.height != in.channels || w.width != kernel * kernel)
    throw InvalidInput("conv2d weight does not match input channels/kernel");
  const int cin = in.channels, h = in.height, wd = in.width;
  const int cout = w.channels;
  const int ho = (h + 2 * pad - kernel) / stride + 1;
  const int wo = (wd + 2 * pad - kernel) / stride + 1;
  const int kk = cin * kernel * kernel;
  const int positions = ho * wo;

  RowMatrix<T> col(kk, positions);
  col.setZero();
  for (int ci = 0; ci < cin; ++ci)
    for (int ky = 0; ky < kernel; ++ky)
      for (int kx = 0; kx < kernel; ++kx) {
        T* row = col.data() + static_cast<std::ptrdiff_t>((ci * kernel + ky) * kernel + kx) * positions;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= wd) continue;
            row[oy * wo + ox] = in(ci, iy, ix);
          }
        }
      }

  Tensor<T> out(cout, ho, wo);
  {
    RowMatrix<T> y(cout, positions);
    y.noalias() = detail::owned(w.data, cout, kk) * col;
    detail::store(y, out.data);
  }
  const bool has_bias = bias.valid();
  if (has_bias) {
    const Tensor<T>& b = g.value(bias);
    if (b.size() != static_cast<std::size_t>(cout)) throw InvalidInput("conv2d bias length mismatch");
    for (int co = 0; co < cout; ++co) {
      T* row = out.channel(co);
      for (int i = 0; i < positions; ++i) row[i] += b.data[static_cast<std::size_t>(co)];
    }
  }

  const bool need = g.requires_grad(x) || g.requires_grad(weight) || (has_bias && g.requires_grad(bias));
  if (!need) return g.constant(std::move(out));
  const int self = static_cast<int>(g.size());
  return g.push(std::move(out), true,
                [=, col = std::move(col)](Graph<T>& gr) {
                  const auto& dy_vec = gr.grad(Var{self});
                  const RowMatrix<T> dy = detail::owned(dy_vec, cout, positions);
                  if (gr.requires_grad(weight)) {
                    RowMatrix<T> dw(cout, kk);
                    dw.noalias() = dy * col.transpose();
                    detail::accumulate(dw, gr.grad(weight));
                  }
                  if (has_bias && gr.requires_grad(bias)) {
                    auto& db = gr.grad(bias);
                    for (int co = 0; co < cout; ++co) {
                      T s = 0;
                      for (int i = 0; i < positions; ++i) s += dy_vec[static_cast<std::size_t>(co) * positions + i];
                      db[static_cast<std::size_t>(co)] += s;
                    }
                  }
                  if (gr.requires_grad(x)) {
                    RowMatrix<T> dcol(kk, positions);
                    dcol.noalias() = detail::owned(gr.value(weight).data, cout, kk).transpose() * dy;
                    auto& dx = gr.grad(x);
                    for (int ci = 0; ci < cin; ++ci)
                      for (int ky = 0; ky < kernel; ++ky)
                        for (int kx = 0; kx < kernel; ++kx) {
                          const T* row =
                              dcol.data() + static_cast<std::ptrdiff_t>((ci * kernel + ky) * kernel + kx) * positions;
                          for (int oy = 0; oy < ho; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= h) continue;
                            T* dxrow = dx.data() + (static_cast<std::size_t>(ci) * h + iy) * wd;
                            for (int ox = 0; ox < wo; ++ox) {
                              const int ix = ox * stride - pad + kx;
                              if (ix < 0 || ix >= wd) continue;
                              dxrow[ix] += row[oy * wo + ox];
                            }
                          }
                        }
                  }
                });
}

namespace detail {

// Elementwise op helper: forward f(x), backward dx += dy * df(x, y).
template <class T, class F, class D>
Var unary(Graph<T>& g, Var x, F f, D df) {
  const Tensor<T>& in = g.value(x);
  Tensor<T> out = in;
  for (auto& v : out.data) v = f(v);
  if (!g.requires_grad(x)) return g.constant(std::move(out));
  const int self = static_cast<int>(g.size());
  return g.push(std::move(out), true, [=](Graph<T>& gr) {
    const auto& dy = gr.grad(Var{self});
    const auto& xv = gr.value(x).data;
    const auto& yv = gr.value(Var{self}).data;
    auto& dx = gr.grad(x);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * df(xv[i], yv[i]);
  });
}

template <class T>
T softplus(T v) {
  return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v)));
}

template <class T>
T sigmoid(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

}  // namespace detail

template <class T>
Var relu(Graph<T>& g, Var x) {
  return detail::unary(
      g, x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Var tanh(Graph<T>& g, Var x) {
  return detail::unary(
      g, x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Var sigmoid(Graph<T>& g, Var x) {
  return detail::unary(
      g, x, [](T v) { return detail::sigmoid(v); }, [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Var softplus(Graph<T>& g, Var x) {
  return detail::unary(
      g, x, [](T v) { return detail::softplus(v); }, [](T v, T) { return detail::sigmoid(v); });
}

template <class T>
Var add_scalar(Graph<T>& g, Var x, T s) {
  return detail::unary(
      g, x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <class T>
Var scale(Graph<T>& g, Var x, T s) {
  return detail::unary(
      g, x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

// Elementwise sum of same-shape tensors.
template <class T>
Var add(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  if (!av.same_shape(bv)) throw InvalidInput("add: shape mismatch");
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
  if (!g.requires_grad(a) && !g.requires_grad(b)) return g.constant(std::move(out));
  const int self = static_cast<int>(g.size());
  return g.push(std::move(out), true, [=](Graph<T>& gr) {
    const auto& dy = gr.grad(Var{self});
    for (Var v : {a, b}) {
      if (!gr.requires_grad(v)) continue;
      auto& dv = gr.grad(v);
      for (std::size_t i = 0; i < dy.size(); ++i) dv[i] += dy[i];
    }
  });
}

// Channel concatenation of tensors sharing spatial size.
template <class T>
Var concat(Graph<T>& g, const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidInput("concat: no inputs");
  const int h = g.value(parts[0]).height, w = g.value(parts[0]).width;
  int channels = 0;
  bool need = false;
  for (Var p : parts) {
    const auto& v = g.value(p);
    if (v.height != h || v.width != w) throw InvalidInput("concat: spatial size mismatch");
    channels += v.channels;
    need |= g.requires_grad(p);
  }
  Tensor<T> out(channels, h, w);
  std::size_t offset = 0;
  for (Var p : parts) {
    const auto& v = g.value(p);
    std::copy(v.data.begin(), v.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += v.size();
  }
  if (!need) return g.constant(std::move(out));
  const int self = static_cast<int>(g.size());
  return g.push(std::move(out), true, [=](Graph<T>& gr) {
    const auto& dy = gr.grad(Var{self});
    std::size_t off = 0;
    for (Var p : parts) {
      const std::size_t n = gr.value(p).size();
      if (gr.requires_grad(p)) {
        auto& dp = gr.grad(p);
        for (std::size_t i = 0; i < n; ++i) dp[i] += dy[off + i];
      }
      off += n;
    }
  });
}

// Contiguous channel range [begin, begin + count).
template <class T>
Var slice_channels(Graph<T>& g, Var x, int begin, int count) {
  const Tensor<T>& in = g.value(x);
  if (begin < 0 || count <= 0 || begin + count > in.channels) throw InvalidInput("slice out of range");
  Tensor<T> out(count, in.height, in.width);
  const std::size_t off = static_cast<std::size_t>(begin) * in.plane();
  std::copy_n(in.data.begin() + static_cast<std::ptrdiff_t>(off), out.size(), out.data.begin());
  if (!g.requires_grad(x)) return g.constant(std::move(out));
  const int self = static_cast<int>(g.size());
  return g.push(std::move(out), true, [=](Graph<T>& gr) {
    const auto& dy = gr.grad(Var{self});
    auto& dx = gr.grad(x);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[off + i] += dy[i];
  });
}

// Nearest-neighbour resize; source index floor(i * in / out).
template <class T>
Var resize_nearest(Graph<T>& g, Var x, int height, int width) {
  const Tensor<T>& in = g.value(x);
  if (in.height == height && in.width == width) return x;
  std::vector<int> sy(static_cast<std::size_t>(height)), sx(static_cast<std::size_t>(width));
  for (int y = 0; y < height; ++y) sy[static_cast<std::size_t>(y)] = std::min(in.height - 1, y * in.height / height);
  for (int xx = 0; xx < width; ++xx) sx[static_cast<std::size_t>(xx)] = std::min(in.width - 1, xx * in.width / width);
  Tensor<T> out(in.channels, height, width);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < height; ++y)
      for (int xx = 0; xx < width; ++xx) out(c, y, xx) = in(c, sy[static_cast<std::size_t>(y)], sx[static_cast<std::size_t>(xx)]);
  if (!g.requires_grad(x)) return g.constant(std::move(out));
  const int self = static_cast<int>(g.size());
  const int ih = in.height, iw = in.width, ch = in.channels;
  return g.push(std::move(out), true, [=](Graph<T>& gr) {
    const auto& dy = gr.grad(Var{self});
    auto& dx = gr.grad(x);
    for (int c = 0; c < ch; ++c)
      for (int y = 0; y < height; ++y)
        for (int xx = 0; xx < width; ++xx)
          dx[(static_cast<std::size_t>(c) * ih + sy[static_cast<std::size_t>(y)]) * iw + sx[static_cast<std::size_t>(xx)]] +=
              dy[(static_cast<std::size_t>(c) * height + y) * width + xx];
  });
}

// Adaptive average pooling to (out_h, out_w) bins.
template <class T>
Var adaptive_avg_pool(Graph<T>& g, Var x, int out_h, int out_w) {
  const Tensor<T>& in = g.value(x);
  const int ih = in.height, iw = in.width, ch = in.channels;
  auto bin = [](int i, int in_size, int out_size) {
    const int start = i * in_size / out_size;
    const int end = ((i + 1) * in_size + out_size - 1) / out_size;
    return std::pair{start, std::max(end, start + 1)};
  };
  Tensor<T> out(ch, out_h, out_w);
  for (int c = 0; c < ch; ++c)
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox) {
        const auto [y0, y1] = bin(oy, ih, out_h);
        const auto [x0, x1] = bin(ox, iw, out_w);
        T sum = 0;
        for (int y = y0; y < y1; ++y)
          for (int xx = x0; xx < x1; ++xx) sum += in(c, y, xx);
        out(c, oy, ox) = sum / T((y1 - y0) * (x1 - x0));
      }
  if (!g.requires_grad(x)) return g.constant(std::move(out));
  const int self = static_cast<int>(g.size());
  return g.push(std::move(out), true, [=](Graph<T>& gr) {
    const auto& dy = gr.grad(Var{self});
    auto& dx = gr.grad(x);
    for (int c = 0; c < ch; ++c)
      for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox) {
          const auto [y0, y1] = bin(oy, ih, out_h);
          const auto [x0, x1] = bin(ox, iw, out_w);
          const T share = dy[(static_cast<std::size_t>(c) * out_h + oy) * out_w + ox] / T((y1 - y0) * (x1 - x0));
          for (int y = y0; y < y1; ++y)
            for (int xx = x0; xx < x1; ++xx) dx[(static_cast<std::size_t>(c) * ih + y) * iw + xx] += share;
        }
  });
}

inline constexpr double kInstanceNormEps = 1e-5;

// Per-channel spatial standardisation followed by y = gamma * xhat + beta.
// Absent gamma/beta mean 1 and 0.
template <class T>
Var instance_norm(Graph<T>& g, Var x, std::optional<Var> gamma, std::optional<Var> beta) {
  const Tensor<T>& in = g.value(x);
  const int ch = in.channels;
  const std::size_t n = in.plane();
  if (gamma && g.value(*gamma).size() != static_cast<std::size_t>(ch)) throw InvalidInput("gamma length mismatch");
  if (beta && g.value(*beta).size() != static_cast<std::size_t>(ch)) throw InvalidInput("beta length mismatch");

  Tensor<T> xhat(ch, in.height, in.width);
  std::vector<T> inv_std(static_cast<std::size_t>(ch));
  Tensor<T> out(ch, in.height, in.width);
  for (int c = 0; c < ch; ++c) {
    const T* src = in.channel(c);
    T mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += src[i];
    mean /= T(n);
    T var = 0;
    for (std::size_t i = 0; i < n; ++i) var += (src[i] - mean) * (src[i] - mean);
    var /= T(n);
    const T inv = T(1) / std::sqrt(var + T(kInstanceNormEps));
    inv_std[static_cast<std::size_t>(c)] = inv;
    const T gm = gamma ? g.value(*gamma).data[static_cast<std::size_t>(c)] : T(1);
    const T bt = beta ? g.value(*beta).data[static_cast<std::size_t>(c)] : T(0);
    T* xh = xhat.channel(c);
    T* dst = out.channel(c);
    for (std::size_t i = 0; i < n; ++i) {
      xh[i] = (src[i] - mean) * inv;
      dst[i] = gm * xh[i] + bt;
    }
  }
  const bool need = g.requires_grad(x) || (gamma && g.requires_grad(*gamma)) || (beta && g.requires_grad(*beta));
  if (!need) return g.constant(std::move(out));
  const int self = static_cast<int>(g.size());
  return g.push(std::move(out), true, [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph<T>& gr) {
    const auto& dy = gr.grad(Var{self});
    const bool dgamma = gamma && gr.requires_grad(*gamma);
    const bool dbeta = beta && gr.requires_grad(*beta);
    const bool dx_needed = gr.requires_grad(x);
    for (int c = 0; c < ch; ++c) {
      const T* dyc = dy.data() + static_cast<std::size_t>(c) * n;
      const T* xh = xhat.channel(c);
      T sum_dy = 0, sum_dy_xh = 0;
      for (std::size_t i = 0; i < n; ++i) {
        sum_dy += dyc[i];
        sum_dy_xh += dyc[i] * xh[i];
      }
      if (dgamma) gr.grad(*gamma)[static_cast<std::size_t>(c)] += sum_dy_xh;
      if (dbeta) gr.grad(*beta)[static_cast<std::size_t>(c)] += sum_dy;
      if (dx_needed) {
        const T gm = gamma ? gr.value(*gamma).data[static_cast<std::size_t>(c)] : T(1);
        const T k = gm * inv_std[static_cast<std::size_t>(c)] / T(n);
        T* dxc = gr.grad(x).data() + static_cast<std::size_t>(c) * n;
        for (std::size_t i = 0; i < n; ++i) dxc[i] += k * (T(n) * dyc[i] - sum_dy - xh[i] * sum_dy_xh);
      }
    }
  });
}

// Fully connected layer on a vector: weight viewed as (out, in, 1).
template <class T>
Var linear(Graph<T>& g, Var x, Var weight, Var bias) {
  const Tensor<T>& in = g.value(x);
  const Tensor<T>& w = g.value(weight);
  const int nin = static_cast<int>(in.size());
  const int nout = w.channels;
  if (static_cast<int>(w.size()) != nout * nin) throw InvalidInput("linear: weight shape mismatch");
  Tensor<T> out(nout, 1, 1);
  {
    RowMatrix<T> y(nout, 1);
    y.noalias() = detail::owned(w.data, nout, nin) * detail::owned(in.data, nin, 1);
    detail::store(y, out.data);
  }
  const auto& b = g.value(bias).data;
  for (int i = 0; i < nout; ++i) out.data[static_cast<std::size_t>(i)] += b[static_cast<std::size_t>(i)];
  if (!g.requires_grad(x) && !g.requires_grad(weight) && !g.requires_grad(bias)) return g.constant(std::move(out));
  const int self = static_cast<int>(g.size());
  return g.push(std::move(out), true, [=](Graph<T>& gr) {
    const auto& dyv = gr.grad(Var{self});
    const RowMatrix<T> dy = detail::owned(dyv, nout, 1);
    if (gr.requires_grad(weight)) {
      RowMatrix<T> dw(nout, nin);
      dw.noalias() = dy * detail::owned(gr.value(x).data, 1, nin);
      detail::accumulate(dw, gr.grad(weight));
    }
    if (gr.requires_grad(bias)) {
      auto& db = gr.grad(bias);
      for (int i = 0; i < nout; ++i) db[static_cast<std::size_t>(i)] += dyv[static_cast<std::size_t>(i)];
    }
    if (gr.requires_grad(x)) {
      RowMatrix<T> dx(nin, 1);
      dx.noalias() = detail::owned(gr.value(weight).data, nout, nin).transpose() * dy;
      detail::accumulate(dx, gr.grad(x));
    }
  });
}

// Bilinear read of every channel at (px, py) in the tensor's own pixel grid.
template <class T>
Var bilinear_sample(Graph<T>& g, Var x, double px, double py) {
  const Tensor<T>& in = g.value(x);
  if (!(px >= 0.0 && py >= 0.0 && px <= in.width - 1 && py <= in.height - 1))
    throw InvalidInput("sample coordinate outside the field");
  const int x0 = static_cast<int>(std::floor(px));
  const int y0 = static_cast<int>(std::floor(py));
  const int x1 = std::min(x0 + 1, in.width - 1);
  const int y1 = std::min(y0 + 1, in.height - 1);
  const T ax = static_cast<T>(px - x0), ay = static_cast<T>(py - y0);
  const T w00 = (T(1) - ax) * (T(1) - ay), w01 = ax * (T(1) - ay), w10 = (T(1) - ax) * ay, w11 = ax * ay;
  const int ch = in.channels;
  Tensor<T> out(ch, 1, 1);
  for (int c = 0; c < ch; ++c) {
    const T top = in(c, y0, x0) * (T(1) - ax) + in(c, y0, x1) * ax;
    const T bottom = in(c, y1, x0) * (T(1) - ax) + in(c, y1, x1) * ax;
    out.data[static_cast<std::size_t>(c)] = top * (T(1) - ay) + bottom * ay;
  }
  if (!g.requires_grad(x)) return g.constant(std::move(out));
  const int self = static_cast<int>(g.size());
  const int h = in.height, w = in.width;
  return g.push(std::move(out), true, [=](Graph<T>& gr) {
    const auto& dy = gr.grad(Var{self});
    auto& dx = gr.grad(x);
    for (int c = 0; c < ch; ++c) {
      const T d = dy[static_cast<std::size_t>(c)];
      const std::size_t base = static_cast<std::size_t>(c) * h * w;
      dx[base + static_cast<std::size_t>(y0) * w + x0] += d * w00;
      dx[base + static_cast<std::size_t>(y0) * w + x1] += d * w01;
      dx[base + static_cast<std::size_t>(y1) * w + x0] += d * w10;
      dx[base + static_cast<std::size_t>(y1) * w + x1] += d * w11;
    }
  });
}

inline constexpr double kProbClamp = 1e-7;

// Mean binary cross-entropy of probabilities against 0/1 targets, with the
// probabilities clamped to [1e-7, 1 - 1e-7]; clamped pixels get no gradient.
template <class T>
Var bce_loss(Graph<T>& g, Var prob, const Tensor<T>& target) {
  const Tensor<T>& p = g.value(prob);
  if (p.size() != target.size()) throw InvalidInput("bce: dimension mismatch");
  const T lo = T(kProbClamp), hi = T(1) - T(kProbClamp);
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp<double>(p.data[i], kProbClamp, 1.0 - kProbClamp);
    const double y = target.data[i];
    total -= y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
  }
  const std::size_t n = p.size();
  Tensor<T> out(1, 1, 1, static_cast<T>(total / double(n)));
  if (!g.requires_grad(prob)) return g.constant(std::move(out));
  const int self = static_cast<int>(g.size());
  return g.push(std::move(out), true, [=](Graph<T>& gr) {
    const T dl = gr.grad(Var{self})[0] / T(n);
    const auto& pv = gr.value(prob).data;
    auto& dp = gr.grad(prob);
    for (std::size_t i = 0; i < n; ++i) {
      const T pi = pv[i];
      if (pi < lo || pi > hi) continue;
      const T y = target.data[i];
      dp[i] += dl * (-(y / pi) + (T(1) - y) / (T(1) - pi));
    }
  });
}

// Smooth-L1 (Huber, delta 1) between a scalar and a fixed target.
template <class T>
Var smooth_l1(Graph<T>& g, Var x, T target) {
  const Tensor<T>& in = g.value(x);
  if (in.size() != 1) throw InvalidInput("smooth_l1 expects a scalar");
  const T d = in.data[0] - target;
  const T loss = std::abs(d) < T(1) ? T(0.5) * d * d : std::abs(d) - T(0.5);
  Tensor<T> out(1, 1, 1, loss);
  if (!g.requires_grad(x)) return g.constant(std::move(out));
  const int self = static_cast<int>(g.size());
  return g.push(std::move(out), true, [=](Graph<T>& gr) {
    const T slope = std::abs(d) < T(1) ? d : (d > T(0) ? T(1) : T(-1));
    gr.grad(x)[0] += gr.grad(Var{self})[0] * slope;
  });
}

}  // namespace dctnet::ag
