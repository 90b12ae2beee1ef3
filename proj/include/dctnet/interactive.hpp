#pragma once

// Per-image interaction state shared by the session service, the benchmark
// predictor, the CLI and the trainer. The click history is the source of
// truth: every derived quantity is a deterministic function of it.

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "dctnet/click_encoding.hpp"
#include "dctnet/error.hpp"
#include "dctnet/feature_dct.hpp"
#include "dctnet/segnet.hpp"

namespace dctnet {

template <class T>
InteractionMaps maps_for(const SegModel<T>& m, std::span<const Click> clicks, int width, int height) {
  return encode(clicks, width, height, m.config().encoding, m.config().fixed_sigma);
}

template <class T>
struct InteractionStep {
  EncoderVars encoder;
  AggregatedClickFeature feature;
  ag::Var probability;
};

// One network evaluation after `clicks.back()` was added: encode with all
// clicks, fold the new click's feature into the aggregate, decode.
template <class T>
InteractionStep<T> interaction_step(ag::Graph<T>& g, const SegModel<T>& m, const Image& image,
                                    std::span<const Click> clicks,
                                    const std::optional<AggregatedClickFeature>& previous, bool track) {
  if (clicks.empty()) throw InvalidInput("interaction step needs at least one click");
  const InteractionMaps maps = maps_for(m, clicks, image.width, image.height);
  InteractionStep<T> step;
  step.encoder = encode(g, m, network_input<T>(image, maps), track);
  const Click& latest = clicks.back();
  step.feature = aggregate(previous, click_feature(g, step.encoder, latest), latest.polarity);
  step.probability = decode(g, m, step.encoder, std::optional<AggregatedClickFeature>(step.feature), track);
  return step;
}

struct InteractionResult {
  Grid<double> probability;
  std::optional<double> radius_used;
  std::size_t click_count = 0;
};

class InteractiveSession {
 public:
  using Model = SegModel<float>;

  InteractiveSession(std::shared_ptr<const Model> model, Image image)
      : model_(std::move(model)), image_(std::move(image)) {
    if (!model_) throw InvalidInput("session needs a model");
    require_network_size(image_.width, image_.height);
  }

  const Image& image() const { return image_; }
  int width() const { return image_.width; }
  int height() const { return image_.height; }
  const Model& model() const { return *model_; }
  const std::vector<Click>& clicks() const { return clicks_; }
  const std::optional<AggregatedClickFeature>& feature() const { return feature_; }
  const std::optional<Grid<double>>& probability() const { return probability_; }

  BinaryMask mask() const {
    if (!probability_) throw StateError("no clicks yet");
    return threshold_mask(*probability_);
  }

  static BinaryMask threshold_mask(const Grid<double>& prob) {
    BinaryMask out(prob.width(), prob.height());
    for (std::size_t i = 0; i < prob.size(); ++i) out[i] = prob[i] >= 0.5 ? 1 : 0;
    return out;
  }

  // Radius the auto-drag head assigns to a click at (x, y) in the current state.
  double predicted_radius(double x, double y) const {
    if (!model_->config().auto_drag) throw StateError("model has no auto-drag head");
    validate_click(Click{x, y, Polarity::positive, std::nullopt}, width(), height());
    if (!levels_) {
      const InteractionMaps empty = maps_for(*model_, std::span<const Click>{}, width(), height());
      ag::Graph<float> g;
      const EncoderVars enc = encode(g, *model_, network_input<float>(image_, empty), false);
      levels_ = click_levels(g, enc);
    }
    return auto_drag_head(*model_, *levels_, width(), height(), x, y);
  }

  InteractionResult add_click(Click click) {
    validate_click(click, width(), height());
    if (clicks_.empty() && !click.positive()) throw ProtocolError("the first interaction must be a positive click");
    if (!click.radius) {
      if (model_->config().auto_drag)
        click.radius = predicted_radius(click.x, click.y);
      else if (model_->config().encoding == EncodingKind::dynamic_gaussian)
        throw InvalidInput("click needs a radius: model has no auto-drag head");
    }
    clicks_.push_back(click);
    try {
      ag::Graph<float> g;
      const auto step = interaction_step(g, *model_, image_, clicks_, feature_, false);
      feature_ = step.feature;
      probability_ = probability_grid(g.value(step.probability));
      levels_ = click_levels(g, step.encoder);
    } catch (...) {
      clicks_.pop_back();
      throw;
    }
    return {*probability_, click.radius, clicks_.size()};
  }

  // Drops the last click and rebuilds the state from the remaining history.
  void undo() {
    if (clicks_.empty()) throw StateError("nothing to undo");
    std::vector<Click> history(clicks_.begin(), clicks_.end() - 1);
    replay(history);
  }

  void reset() {
    clicks_.clear();
    feature_.reset();
    probability_.reset();
    levels_.reset();
  }

  // Rebuilds the state by applying `history` from scratch. Radii recorded in
  // the history are reused as-is.
  void replay(const std::vector<Click>& history) {
    reset();
    for (const auto& c : history) add_click(c);
  }

 private:
  std::shared_ptr<const Model> model_;
  Image image_;
  std::vector<Click> clicks_;
  std::optional<AggregatedClickFeature> feature_;
  std::optional<Grid<double>> probability_;
  // Click-feature levels of the latest state; the pre-click input of the
  // auto-drag head.
  mutable std::optional<std::array<Tensor<float>, kConditionedLevels>> levels_;
};

}  // namespace dctnet
