#pragma once

// Feature-level click transform: sample encoder features at each click,
// aggregate them across interactions, and turn the aggregate into per-channel
// scale/shift statistics for the conditioned instance-norm sites.

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "dctnet/autograd.hpp"
#include "dctnet/click_encoding.hpp"
#include "dctnet/raster.hpp"

namespace dctnet {

inline constexpr int kConditionedLevels = 3;
inline constexpr double kRejectionEps = 1e-8;
inline constexpr double kGammaFloor = 1e-3;

struct AggregatedClickFeature {
  std::vector<double> vector;
  int interaction_index = 0;

  bool operator==(const AggregatedClickFeature&) const = default;
};

template <class T>
struct ConditioningStats {
  std::array<std::vector<T>, kConditionedLevels> gamma;
  std::array<std::vector<T>, kConditionedLevels> beta;
};

// Position of an image-space coordinate on a level of the given size. A
// stride-s level pixel i is centred on image pixel s*i, hence the plain
// ratio; the result is clamped into the level's sampling range.
inline double level_coordinate(double image_coord, int image_size, int level_size) {
  return std::clamp(image_coord * level_size / image_size, 0.0, double(level_size - 1));
}

// Click-position feature: bilinear sample of each level, concatenated in
// level order.
template <class T>
std::vector<double> extract_click_feature(std::span<const Tensor<T>> levels, const Click& click, int image_width,
                                          int image_height) {
  if (levels.empty()) throw InvalidInput("no feature levels");
  validate_click(click, image_width, image_height);
  std::vector<double> out;
  for (const auto& level : levels) {
    const double lx = level_coordinate(click.x, image_width, level.width);
    const double ly = level_coordinate(click.y, image_height, level.height);
    for (T v : bilinear_sample(level, lx, ly)) out.push_back(static_cast<double>(v));
  }
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Running aggregate: midpoint with a positive click's feature, vector
// rejection of the negative click's direction otherwise. Degenerate
// rejections keep the previous aggregate.
inline AggregatedClickFeature aggregate(const std::optional<AggregatedClickFeature>& previous,
                                        std::span<const double> q, Polarity polarity) {
  for (double v : q)
    if (!std::isfinite(v)) throw InvalidInput("click feature is not finite");
  if (!previous) {
    if (polarity != Polarity::positive) throw ProtocolError("the first interaction must be a positive click");
    return {std::vector<double>(q.begin(), q.end()), 1};
  }
  const auto& f = previous->vector;
  if (f.size() != q.size()) throw InvalidInput("click feature dimension mismatch");
  AggregatedClickFeature next{f, previous->interaction_index + 1};
  if (polarity == Polarity::positive) {
    for (std::size_t i = 0; i < f.size(); ++i) next.vector[i] = (f[i] + q[i]) / 2.0;
    return next;
  }
  const double f_norm = norm(f);
  const double q_norm = norm(q);
  if (q_norm < kRejectionEps) return next;
  const double proj = dot(f, q) / q_norm;
  std::vector<double> rejected(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) rejected[i] = f[i] - proj * (q[i] / q_norm);
  if (norm(rejected) < kRejectionEps * f_norm) return next;
  next.vector = std::move(rejected);
  return next;
}

// Two-layer fully connected head: D -> hidden (tanh) -> 2 * (w1 + w2 + w3),
// laid out as [gamma_1, beta_1, gamma_2, beta_2, gamma_3, beta_3].
template <class T>
struct ConditioningHead {
  std::array<int, kConditionedLevels> widths{};
  int input_dim = 0;
  int hidden = 0;
  const ag::Parameter<T>* fc1_weight = nullptr;
  const ag::Parameter<T>* fc1_bias = nullptr;
  const ag::Parameter<T>* fc2_weight = nullptr;
  const ag::Parameter<T>* fc2_bias = nullptr;

  int output_dim() const { return 2 * (widths[0] + widths[1] + widths[2]); }
};

template <class T>
struct ConditioningVars {
  std::array<ag::Var, kConditionedLevels> gamma;
  std::array<ag::Var, kConditionedLevels> beta;
};

template <class T>
ConditioningVars<T> conditioning_graph(ag::Graph<T>& g, const ConditioningHead<T>& head,
                                       const AggregatedClickFeature& f, bool track) {
  if (static_cast<int>(f.vector.size()) != head.input_dim) throw InvalidInput("aggregated feature dimension mismatch");
  std::vector<T> fv(f.vector.begin(), f.vector.end());
  const ag::Var x = g.constant(Tensor<T>::vector(std::move(fv)));
  const ag::Var w1 = g.parameter(*head.fc1_weight, head.hidden, head.input_dim, 1, track);
  const ag::Var b1 = g.parameter(*head.fc1_bias, head.hidden, 1, 1, track);
  const ag::Var w2 = g.parameter(*head.fc2_weight, head.output_dim(), head.hidden, 1, track);
  const ag::Var b2 = g.parameter(*head.fc2_bias, head.output_dim(), 1, 1, track);
  const ag::Var hidden = ag::tanh(g, ag::linear(g, x, w1, b1));
  const ag::Var raw = ag::linear(g, hidden, w2, b2);
  ConditioningVars<T> out;
  int offset = 0;
  for (int l = 0; l < kConditionedLevels; ++l) {
    const int w = head.widths[static_cast<std::size_t>(l)];
    out.gamma[static_cast<std::size_t>(l)] =
        ag::add_scalar(g, ag::softplus(g, ag::slice_channels(g, raw, offset, w)), T(kGammaFloor));
    out.beta[static_cast<std::size_t>(l)] = ag::slice_channels(g, raw, offset + w, w);
    offset += 2 * w;
  }
  return out;
}

template <class T>
ConditioningStats<T> predict_conditioning(const AggregatedClickFeature& f, const ConditioningHead<T>& head) {
  ag::Graph<T> g;
  const auto vars = conditioning_graph(g, head, f, false);
  ConditioningStats<T> out;
  for (int l = 0; l < kConditionedLevels; ++l) {
    out.gamma[static_cast<std::size_t>(l)] = g.value(vars.gamma[static_cast<std::size_t>(l)]).data;
    out.beta[static_cast<std::size_t>(l)] = g.value(vars.beta[static_cast<std::size_t>(l)]).data;
  }
  return out;
}

template <class T>
Tensor<T> conditioned_instance_norm(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta) {
  if (gamma.size() != static_cast<std::size_t>(x.channels) || beta.size() != gamma.size())
    throw InvalidInput("scale/shift length must equal channel count");
  ag::Graph<T> g;
  const ag::Var xv = g.constant(x);
  const ag::Var gv = g.constant(Tensor<T>::vector({gamma.begin(), gamma.end()}));
  const ag::Var bv = g.constant(Tensor<T>::vector({beta.begin(), beta.end()}));
  return g.value(ag::instance_norm(g, xv, gv, bv));
}

}  // namespace dctnet
