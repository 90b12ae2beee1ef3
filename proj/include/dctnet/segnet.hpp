#pragma once

// Compact interactive segmentation network:
//
//   input (RGB + positive map + negative map)
//     -> 4 stride-2 encoder blocks
//     -> spatial pyramid pooling (1/2/4 average-pool branches, 1x1 fusion)
//     -> 3 decoder blocks with skip connections, each ending in an
//        instance-norm site whose scale/shift come from the click features
//     -> full-resolution refinement conv over (decoder, input) -> 1x1 -> sigmoid
//
// plus the auto-drag head that predicts a click's diffusion radius.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dctnet/autograd.hpp"
#include "dctnet/click_encoding.hpp"
#include "dctnet/feature_dct.hpp"
#include "dctnet/raster.hpp"

namespace dctnet {

inline constexpr int kInputChannels = 5;
inline constexpr int kEncoderBlocks = 4;
inline constexpr int kSizeMultiple = 8;

struct ModelConfig {
  std::array<int, kEncoderBlocks> encoder_widths{16, 32, 64, 128};
  std::array<int, kConditionedLevels> decoder_widths{64, 32, 16};
  int refine_width = 8;
  int head_hidden = 128;
  int drag_hidden = 32;
  EncodingKind encoding = EncodingKind::dynamic_gaussian;
  bool feature_dct = true;
  bool auto_drag = true;
  double fixed_sigma = 10.0;

  // Width of the concatenated click feature Q(c) (first three encoder levels).
  int click_feature_dim() const { return encoder_widths[0] + encoder_widths[1] + encoder_widths[2]; }

  bool operator==(const ModelConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"encoder_widths", c.encoder_widths}, {"decoder_widths", c.decoder_widths},
                     {"refine_width", c.refine_width},     {"head_hidden", c.head_hidden},
                     {"drag_hidden", c.drag_hidden},       {"encoding", to_string(c.encoding)},
                     {"feature_dct", c.feature_dct},       {"auto_drag", c.auto_drag},
                     {"fixed_sigma", c.fixed_sigma}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("encoder_widths").get_to(c.encoder_widths);
  j.at("decoder_widths").get_to(c.decoder_widths);
  j.at("refine_width").get_to(c.refine_width);
  j.at("head_hidden").get_to(c.head_hidden);
  j.at("drag_hidden").get_to(c.drag_hidden);
  c.encoding = encoding_from_string(j.at("encoding").get<std::string>());
  j.at("feature_dct").get_to(c.feature_dct);
  j.at("auto_drag").get_to(c.auto_drag);
  j.at("fixed_sigma").get_to(c.fixed_sigma);
}

// Ablation presets: the baseline encodes clicks as clamped Euclidean
// distance maps; Spatial-DCT switches to per-click Gaussians with an
// auto-drag head; Feature-DCT adds click-feature conditioning.
inline ModelConfig ablation_config(bool spatial_dct, bool feature_dct) {
  ModelConfig c;
  c.encoding = spatial_dct ? EncodingKind::dynamic_gaussian : EncodingKind::euclidean;
  c.auto_drag = spatial_dct;
  c.feature_dct = feature_dct;
  return c;
}

namespace detail {

inline double inverse_softplus(double y) { return std::log(std::expm1(y)); }

}  // namespace detail

template <class T>
class SegModel {
 public:
  using Param = ag::Parameter<T>;

  SegModel() = default;

  explicit SegModel(const ModelConfig& config, std::uint64_t seed = 0) : config_(config) {
    for (int w : config.encoder_widths)
      if (w <= 0) throw InvalidInput("encoder widths must be positive");
    for (int w : config.decoder_widths)
      if (w <= 0) throw InvalidInput("decoder widths must be positive");
    build();
    initialize(seed);
  }

  const ModelConfig& config() const { return config_; }
  std::vector<Param>& parameters() { return params_; }
  const std::vector<Param>& parameters() const { return params_; }

  const Param& param(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw InvalidInput("unknown parameter '" + name + "'");
    return params_[it->second];
  }
  Param& param(const std::string& name) { return const_cast<Param&>(std::as_const(*this).param(name)); }
  bool has_param(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  void zero_grad() const {
    for (const auto& p : params_) p.zero_grad();
  }

  ConditioningHead<T> conditioning_head() const {
    ConditioningHead<T> head;
    head.widths = config_.decoder_widths;
    head.input_dim = config_.click_feature_dim();
    head.hidden = config_.head_hidden;
    head.fc1_weight = &param("feature_head.fc1.weight");
    head.fc1_bias = &param("feature_head.fc1.bias");
    head.fc2_weight = &param("feature_head.fc2.weight");
    head.fc2_bias = &param("feature_head.fc2.bias");
    return head;
  }

  // Same architecture and values at another precision.
  template <class U>
  SegModel<U> cast() const {
    SegModel<U> out;
    out.adopt(config_, [&] {
      std::vector<ag::Parameter<U>> ps;
      for (const auto& p : params_) {
        ag::Parameter<U> q(p.name, p.dims);
        std::copy(p.value.begin(), p.value.end(), q.value.begin());
        ps.push_back(std::move(q));
      }
      return ps;
    }());
    return out;
  }

  // Replace configuration and parameters wholesale (checkpoint loading).
  void adopt(const ModelConfig& config, std::vector<Param> params) {
    config_ = config;
    params_ = std::move(params);
    index_.clear();
    for (std::size_t i = 0; i < params_.size(); ++i) index_[params_[i].name] = i;
  }

  // Names in construction order; the canonical manifest of a configuration.
  static std::vector<std::string> manifest(const ModelConfig& config) {
    SegModel m;
    m.config_ = config;
    m.build();
    std::vector<std::string> names;
    for (const auto& p : m.params_) names.push_back(p.name);
    return names;
  }

 private:
  void add(const std::string& name, std::vector<int> dims) {
    index_[name] = params_.size();
    params_.emplace_back(name, std::move(dims));
  }

  void build() {
    const auto& ew = config_.encoder_widths;
    const auto& dw = config_.decoder_widths;
    int in = kInputChannels;
    for (int i = 0; i < kEncoderBlocks; ++i) {
      const std::string n = "encoder." + std::to_string(i);
      add(n + ".weight", {ew[static_cast<std::size_t>(i)], in, 3, 3});
      add(n + ".bias", {ew[static_cast<std::size_t>(i)]});
      in = ew[static_cast<std::size_t>(i)];
    }
    add("spp.weight", {ew[3], 4 * ew[3], 1, 1});
    add("spp.bias", {ew[3]});
    int prev = ew[3];
    for (int l = 0; l < kConditionedLevels; ++l) {
      const int skip = ew[static_cast<std::size_t>(2 - l)];
      // No bias: the following instance norm removes it.
      add("decoder." + std::to_string(l) + ".weight", {dw[static_cast<std::size_t>(l)], prev + skip, 3, 3});
      prev = dw[static_cast<std::size_t>(l)];
    }
    add("refine.weight", {config_.refine_width, prev + kInputChannels, 3, 3});
    add("refine.bias", {config_.refine_width});
    add("output.weight", {1, config_.refine_width, 1, 1});
    add("output.bias", {1});
    const int d = config_.click_feature_dim();
    if (config_.feature_dct) {
      const int out = 2 * (dw[0] + dw[1] + dw[2]);
      add("feature_head.fc1.weight", {config_.head_hidden, d});
      add("feature_head.fc1.bias", {config_.head_hidden});
      add("feature_head.fc2.weight", {out, config_.head_hidden});
      add("feature_head.fc2.bias", {out});
    }
    if (config_.auto_drag) {
      add("drag_head.fc1.weight", {config_.drag_hidden, d});
      add("drag_head.fc1.bias", {config_.drag_hidden});
      add("drag_head.fc2.weight", {1, config_.drag_hidden});
      add("drag_head.fc2.bias", {1});
    }
  }

  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto fill_normal = [&](Param& p, double stddev) {
      std::normal_distribution<double> dist(0.0, stddev);
      for (auto& v : p.value) v = static_cast<T>(dist(rng));
    };
    auto fan_in = [](const Param& p) {
      int n = 1;
      for (std::size_t i = 1; i < p.dims.size(); ++i) n *= p.dims[i];
      return n;
    };
    for (auto& p : params_) {
      const bool is_weight = p.name.ends_with(".weight");
      if (!is_weight) continue;
      fill_normal(p, std::sqrt(2.0 / fan_in(p)));
    }
    fill_normal(param("output.weight"), std::sqrt(1.0 / config_.refine_width));
    if (config_.feature_dct) {
      // Start near unconditioned instance norm: gamma ~ 1, beta ~ 0.
      fill_normal(param("feature_head.fc1.weight"), std::sqrt(1.0 / config_.click_feature_dim()));
      fill_normal(param("feature_head.fc2.weight"), 0.01 / std::sqrt(double(config_.head_hidden)));
      auto& b = param("feature_head.fc2.bias").value;
      std::size_t off = 0;
      for (int w : config_.decoder_widths) {
        for (int i = 0; i < w; ++i) b[off + static_cast<std::size_t>(i)] = static_cast<T>(detail::inverse_softplus(1.0 - kGammaFloor));
        off += 2 * static_cast<std::size_t>(w);
      }
    }
    if (config_.auto_drag) {
      fill_normal(param("drag_head.fc1.weight"), std::sqrt(1.0 / config_.click_feature_dim()));
      fill_normal(param("drag_head.fc2.weight"), 0.01 / std::sqrt(double(config_.drag_hidden)));
      // Initial radius prediction around 5 px.
      param("drag_head.fc2.bias").value[0] = static_cast<T>(detail::inverse_softplus(4.0));
    }
  }

  ModelConfig config_;
  std::vector<Param> params_;
  std::map<std::string, std::size_t> index_;
};

inline void require_network_size(int width, int height) {
  if (width <= 0 || height <= 0 || width % kSizeMultiple != 0 || height % kSizeMultiple != 0)
    throw InvalidInput("network input dimensions must be positive multiples of 8");
}

// Stacks image channels and the two interaction maps.
template <class T>
Tensor<T> network_input(const Image& image, const InteractionMaps& maps) {
  if (image.channels != 3) throw InvalidInput("image must have 3 channels");
  if (maps.width() != image.width || maps.height() != image.height)
    throw InvalidInput("interaction maps and image differ in size");
  require_network_size(image.width, image.height);
  Tensor<T> in(kInputChannels, image.height, image.width);
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < image.plane(); ++i) in.channel(c)[i] = static_cast<T>(image.channel(c)[i]);
  for (std::size_t i = 0; i < image.plane(); ++i) {
    in.channel(3)[i] = static_cast<T>(maps.positive[i]);
    in.channel(4)[i] = static_cast<T>(maps.negative[i]);
  }
  return in;
}

struct EncoderVars {
  ag::Var input;
  std::array<ag::Var, kEncoderBlocks> levels;
  int width = 0;
  int height = 0;
};

template <class T>
ag::Var conv_param_view(ag::Graph<T>& g, const ag::Parameter<T>& w, bool track) {
  // (out, in, k, k) or (out, in) viewed as (out, in, k*k).
  const int k2 = w.dims.size() == 4 ? w.dims[2] * w.dims[3] : 1;
  return g.parameter(w, w.dims[0], w.dims[1], k2, track);
}

template <class T>
ag::Var vector_param_view(ag::Graph<T>& g, const ag::Parameter<T>& b, bool track) {
  return g.parameter(b, static_cast<int>(b.size()), 1, 1, track);
}

template <class T>
EncoderVars encode(ag::Graph<T>& g, const SegModel<T>& m, Tensor<T> input, bool track) {
  if (input.channels != kInputChannels) throw InvalidInput("network input must have 5 channels");
  require_network_size(input.width, input.height);
  EncoderVars out;
  out.width = input.width;
  out.height = input.height;
  out.input = g.constant(std::move(input));
  ag::Var x = out.input;
  for (int i = 0; i < kEncoderBlocks; ++i) {
    const std::string n = "encoder." + std::to_string(i);
    const ag::Var w = conv_param_view(g, m.param(n + ".weight"), track);
    const ag::Var b = vector_param_view(g, m.param(n + ".bias"), track);
    x = ag::relu(g, ag::conv2d(g, x, w, b, 3, 2, 1));
    out.levels[static_cast<std::size_t>(i)] = x;
  }
  return out;
}

template <class T>
std::array<Tensor<T>, kConditionedLevels> click_levels(const ag::Graph<T>& g, const EncoderVars& enc) {
  return {g.value(enc.levels[0]), g.value(enc.levels[1]), g.value(enc.levels[2])};
}

// Q(c) read off the encoder levels of a finished encode() call.
template <class T>
std::vector<double> click_feature(const ag::Graph<T>& g, const EncoderVars& enc, const Click& click) {
  const auto levels = click_levels(g, enc);
  return extract_click_feature<T>(levels, click, enc.width, enc.height);
}

// Differentiable Q(c): concatenated bilinear samples of the three levels.
template <class T>
ag::Var click_feature_var(ag::Graph<T>& g, const EncoderVars& enc, double x, double y) {
  if (!(x >= 0.0 && y >= 0.0 && x <= enc.width - 1 && y <= enc.height - 1))
    throw InvalidInput("click outside image bounds");
  std::vector<ag::Var> parts;
  for (int l = 0; l < kConditionedLevels; ++l) {
    const auto& level = g.value(enc.levels[static_cast<std::size_t>(l)]);
    parts.push_back(ag::bilinear_sample(g, enc.levels[static_cast<std::size_t>(l)],
                                        level_coordinate(x, enc.width, level.width),
                                        level_coordinate(y, enc.height, level.height)));
  }
  return ag::concat(g, parts);
}

// Probability map (1, H, W). Without an aggregated feature (or with
// Feature-DCT disabled) the instance-norm sites run unconditioned.
template <class T>
ag::Var decode(ag::Graph<T>& g, const SegModel<T>& m, const EncoderVars& enc,
               const std::optional<AggregatedClickFeature>& feature, bool track) {
  const auto& cfg = m.config();
  std::optional<ConditioningVars<T>> cond;
  if (cfg.feature_dct && feature) cond = conditioning_graph(g, m.conditioning_head(), *feature, track);

  const ag::Var bottleneck = enc.levels[3];
  const auto& bv = g.value(bottleneck);
  std::vector<ag::Var> pyramid{bottleneck};
  for (int s : {1, 2, 4}) {
    const ag::Var pooled = ag::adaptive_avg_pool(g, bottleneck, s, s);
    pyramid.push_back(ag::resize_nearest(g, pooled, bv.height, bv.width));
  }
  ag::Var x = ag::relu(g, ag::conv2d(g, ag::concat(g, pyramid), conv_param_view(g, m.param("spp.weight"), track),
                                     vector_param_view(g, m.param("spp.bias"), track), 1, 1, 0));

  for (int l = 0; l < kConditionedLevels; ++l) {
    const ag::Var skip = enc.levels[static_cast<std::size_t>(2 - l)];
    const auto& sv = g.value(skip);
    const ag::Var up = ag::resize_nearest(g, x, sv.height, sv.width);
    const ag::Var conv = ag::conv2d(g, ag::concat(g, {up, skip}),
                                    conv_param_view(g, m.param("decoder." + std::to_string(l) + ".weight"), track),
                                    ag::Var{}, 3, 1, 1);
    std::optional<ag::Var> gamma, beta;
    if (cond) {
      gamma = cond->gamma[static_cast<std::size_t>(l)];
      beta = cond->beta[static_cast<std::size_t>(l)];
    }
    x = ag::relu(g, ag::instance_norm(g, conv, gamma, beta));
  }

  const ag::Var full = ag::resize_nearest(g, x, enc.height, enc.width);
  const ag::Var refined = ag::relu(g, ag::conv2d(g, ag::concat(g, {full, enc.input}),
                                                 conv_param_view(g, m.param("refine.weight"), track),
                                                 vector_param_view(g, m.param("refine.bias"), track), 3, 1, 1));
  const ag::Var logit = ag::conv2d(g, refined, conv_param_view(g, m.param("output.weight"), track),
                                   vector_param_view(g, m.param("output.bias"), track), 1, 1, 0);
  return ag::sigmoid(g, logit);
}

// Predicted diffusion radius r = 1 + softplus(head(Q(c))) > 1.
template <class T>
ag::Var drag_radius(ag::Graph<T>& g, const SegModel<T>& m, const EncoderVars& enc, double x, double y, bool track) {
  if (!m.config().auto_drag) throw StateError("model was built without an auto-drag head");
  const ag::Var q = click_feature_var(g, enc, x, y);
  const auto& cfg = m.config();
  const ag::Var w1 = g.parameter(m.param("drag_head.fc1.weight"), cfg.drag_hidden, cfg.click_feature_dim(), 1, track);
  const ag::Var b1 = vector_param_view(g, m.param("drag_head.fc1.bias"), track);
  const ag::Var w2 = g.parameter(m.param("drag_head.fc2.weight"), 1, cfg.drag_hidden, 1, track);
  const ag::Var b2 = vector_param_view(g, m.param("drag_head.fc2.bias"), track);
  const ag::Var hidden = ag::tanh(g, ag::linear(g, q, w1, b1));
  return ag::add_scalar(g, ag::softplus(g, ag::linear(g, hidden, w2, b2)), T(1));
}

template <class T>
struct ForwardOutput {
  Grid<double> probability;
  std::array<Tensor<T>, kConditionedLevels> levels;
};

inline Grid<double> probability_grid(const Tensor<float>& t) {
  Grid<double> out(t.width, t.height);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = t.data[i];
  return out;
}

inline Grid<double> probability_grid(const Tensor<double>& t) {
  Grid<double> out(t.width, t.height);
  std::copy(t.data.begin(), t.data.end(), out.values().begin());
  return out;
}

// Inference pass: probability mask plus the three click-feature levels.
template <class T>
ForwardOutput<T> forward(const SegModel<T>& m, const Image& image, const InteractionMaps& maps,
                         const std::optional<AggregatedClickFeature>& feature) {
  ag::Graph<T> g;
  const EncoderVars enc = encode(g, m, network_input<T>(image, maps), false);
  const ag::Var prob = decode(g, m, enc, feature, false);
  return {probability_grid(g.value(prob)), click_levels(g, enc)};
}

// Auto-drag head on precomputed click-feature levels of an image of the
// given size.
template <class T>
double auto_drag_head(const SegModel<T>& m, const std::array<Tensor<T>, kConditionedLevels>& levels, int width,
                      int height, double x, double y) {
  ag::Graph<T> g;
  EncoderVars enc;
  enc.width = width;
  enc.height = height;
  for (int l = 0; l < kConditionedLevels; ++l) enc.levels[static_cast<std::size_t>(l)] = g.constant(levels[static_cast<std::size_t>(l)]);
  return static_cast<double>(g.value(drag_radius(g, m, enc, x, y, false)).data[0]);
}

// Radius the auto-drag head predicts for a click at (x, y), reading the
// encoder levels of the state before that click.
template <class T>
double auto_drag_radius(const SegModel<T>& m, const Image& image, const InteractionMaps& maps, double x, double y) {
  ag::Graph<T> g;
  const EncoderVars enc = encode(g, m, network_input<T>(image, maps), false);
  return static_cast<double>(g.value(drag_radius(g, m, enc, x, y, false)).data[0]);
}

}  // namespace dctnet
