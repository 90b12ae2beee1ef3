#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "dctnet/adam.hpp"
#include "dctnet/datasets.hpp"
#include "dctnet/interactive.hpp"
#include "dctnet/robot_user.hpp"
#include "dctnet/segnet.hpp"

namespace dctnet {

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int batch_size = 8;
  int epochs = 20;
  double lr_decay = 0.1;
  int lr_step_epochs = 10;
  int crop_size = 64;
  // Simulated interactions (and weight updates) per sample.
  int max_clicks = 3;
  std::uint64_t seed = 0;
  bool augment = true;
  double drag_loss_weight = 0.1;
};

inline void validate(const TrainConfig& c) {
  if (!(c.lr > 0.0)) throw InvalidInput("learning rate must be positive");
  if (!(c.beta1 > 0.0 && c.beta1 < 1.0) || !(c.beta2 > 0.0 && c.beta2 < 1.0))
    throw InvalidInput("Adam betas must lie in (0, 1)");
  if (c.batch_size < 1 || c.epochs < 0 || c.max_clicks < 1 || c.lr_step_epochs < 1)
    throw InvalidInput("batch size, epochs, click budget and lr step must be positive");
  if (c.crop_size < 16 || c.crop_size % kSizeMultiple != 0) throw InvalidInput("crop size must be a multiple of 8");
}

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;       // BCE + weighted drag loss, per interaction
  double mean_bce = 0.0;
  double mean_drag_error = 0.0;  // |predicted - simulated radius|, px
  long interactions = 0;
  long updates = 0;
  double seconds = 0.0;
};

template <class T>
struct TrainResult {
  std::vector<EpochMetrics> epochs;
  AdamState<T> optimizer;
};

// Random rescale (0.75-1.25), crop/pad to the crop size, horizontal flip and
// per-channel multiplicative colour jitter U(0.8, 1.2).
inline Sample augment_sample(const Sample& s, int crop, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> scale_dist(0.75, 1.25);
  const double scale = scale_dist(rng);
  const int w = std::max(1, static_cast<int>(std::lround(s.image.width * scale)));
  const int h = std::max(1, static_cast<int>(std::lround(s.image.height * scale)));
  const Image img = resize_bilinear(s.image, w, h);
  const BinaryMask gt = resize_nearest(s.gt, w, h);
  std::optional<BinaryMask> ignore;
  if (s.ignore) ignore = resize_nearest(*s.ignore, w, h);

  // Crop window origin; may be negative when the scaled image is smaller.
  auto crop_at = [&](int ox, int oy) {
    Sample out;
    out.id = s.id;
    out.image = Image(3, crop, crop);
    out.gt = BinaryMask(crop, crop);
    if (ignore) out.ignore = BinaryMask(crop, crop);
    for (int y = 0; y < crop; ++y)
      for (int x = 0; x < crop; ++x) {
        const int sx = x + ox, sy = y + oy;
        const bool inside = sx >= 0 && sy >= 0 && sx < w && sy < h;
        const int cx = std::clamp(sx, 0, w - 1), cy = std::clamp(sy, 0, h - 1);
        for (int c = 0; c < 3; ++c) out.image(c, y, x) = img(c, cy, cx);
        if (inside) {
          out.gt(x, y) = gt(sx, sy);
          if (ignore) (*out.ignore)(x, y) = (*ignore)(sx, sy);
        }
      }
    return out;
  };
  auto offset_range = [](int size, int crop_size) { return std::pair{std::min(0, size - crop_size), std::max(0, size - crop_size)}; };
  const auto [x_lo, x_hi] = offset_range(w, crop);
  const auto [y_lo, y_hi] = offset_range(h, crop);
  std::uniform_int_distribution<int> ox_dist(x_lo, x_hi), oy_dist(y_lo, y_hi);
  Sample out;
  bool found = false;
  for (int attempt = 0; attempt < 10 && !found; ++attempt) {
    out = crop_at(ox_dist(rng), oy_dist(rng));
    found = out.gt.any();
  }
  if (!found) {
    // Centre the window on the first object pixel.
    for (std::size_t i = 0; i < gt.size() && !found; ++i)
      if (gt[i]) {
        const int px = static_cast<int>(i % static_cast<std::size_t>(w)), py = static_cast<int>(i / static_cast<std::size_t>(w));
        out = crop_at(std::clamp(px - crop / 2, x_lo, x_hi), std::clamp(py - crop / 2, y_lo, y_hi));
        found = out.gt.any();
      }
  }
  if (!found) throw InvalidInput("augmentation lost the object of sample " + s.id);

  std::bernoulli_distribution flip(0.5);
  if (flip(rng)) {
    for (int y = 0; y < crop; ++y)
      for (int x = 0; x < crop / 2; ++x) {
        const int xr = crop - 1 - x;
        for (int c = 0; c < 3; ++c) std::swap(out.image(c, y, x), out.image(c, y, xr));
        std::swap(out.gt(x, y), out.gt(xr, y));
        if (out.ignore) std::swap((*out.ignore)(x, y), (*out.ignore)(xr, y));
      }
  }
  std::uniform_real_distribution<float> jitter(0.8f, 1.2f);
  for (int c = 0; c < 3; ++c) {
    const float k = jitter(rng);
    float* ch = out.image.channel(c);
    for (std::size_t i = 0; i < out.image.plane(); ++i) ch[i] = std::clamp(ch[i] * k, 0.0f, 1.0f);
  }
  return out;
}

template <class T>
Tensor<T> target_tensor(const BinaryMask& gt) {
  Tensor<T> t(1, gt.height(), gt.width());
  for (std::size_t i = 0; i < gt.size(); ++i) t.data[i] = gt[i] ? T(1) : T(0);
  return t;
}

// Click-by-click training: each sample receives a first click, then
// corrective clicks from the robot user on the model's own predictions; the
// loss is computed and the weights are updated after every interaction.
// Interactions of the samples in a batch are accumulated in a fixed order
// before each update, so runs with the same seed are bitwise reproducible.
template <class T>
TrainResult<T> train_interactive(SegModel<T>& model, const std::vector<Sample>& dataset, const TrainConfig& cfg,
                                 const std::function<void(const EpochMetrics&)>& on_epoch = {},
                                 std::optional<AdamState<T>> resume = std::nullopt) {
  validate(cfg);
  if (dataset.empty()) throw InvalidInput("training dataset is empty");
  for (const auto& s : dataset) validate_sample(s);

  std::mt19937_64 rng(cfg.seed);
  TrainResult<T> result;
  if (resume) result.optimizer = std::move(*resume);
  const bool train_drag = model.config().auto_drag && model.config().encoding == EncodingKind::dynamic_gaussian;

  struct Active {
    Sample sample;
    std::vector<Click> clicks;
    std::optional<AggregatedClickFeature> feature;
    BinaryMask prediction;
    bool done = false;
  };

  std::vector<std::size_t> order(dataset.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    EpochMetrics metrics;
    metrics.epoch = epoch + 1;
    metrics.lr = cfg.lr * std::pow(cfg.lr_decay, epoch / cfg.lr_step_epochs);
    const AdamConfig adam{metrics.lr, cfg.beta1, cfg.beta2, 1e-8};
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0, bce_sum = 0.0, drag_sum = 0.0;
    long drag_count = 0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Active> batch;
      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = dataset[order[i]];
        Active a;
        if (cfg.augment) {
          a.sample = augment_sample(s, cfg.crop_size, rng);
        } else {
          a.sample = s;
          require_network_size(s.image.width, s.image.height);
        }
        batch.push_back(std::move(a));
      }

      for (int k = 0; k < cfg.max_clicks; ++k) {
        model.zero_grad();
        int contributing = 0;
        for (auto& a : batch) {
          if (a.done) continue;
          const Sample& s = a.sample;
          const SimulatedInteraction sim =
              k == 0 ? first_click(s.gt) : next_click(s.gt, a.prediction, s.ignore ? &*s.ignore : nullptr);
          if (sim.converged) {
            a.done = true;
            continue;
          }
          const Click click = *sim.click;
          ag::Graph<T> g;
          std::optional<ag::Var> drag_loss;
          if (train_drag) {
            const InteractionMaps before = maps_for(model, a.clicks, s.image.width, s.image.height);
            const EncoderVars pre = encode(g, model, network_input<T>(s.image, before), true);
            const ag::Var r = drag_radius(g, model, pre, click.x, click.y, true);
            drag_sum += std::abs(double(g.value(r).data[0]) - *click.radius);
            ++drag_count;
            drag_loss = ag::scale(g, ag::smooth_l1(g, r, T(*click.radius)), T(cfg.drag_loss_weight));
          }
          a.clicks.push_back(click);
          const auto step = interaction_step(g, model, s.image, a.clicks, a.feature, true);
          const ag::Var bce = ag::bce_loss(g, step.probability, target_tensor<T>(s.gt));
          const ag::Var loss = drag_loss ? ag::add(g, bce, *drag_loss) : bce;
          g.backward(loss);
          bce_sum += double(g.value(bce).data[0]);
          loss_sum += double(g.value(loss).data[0]);
          ++metrics.interactions;
          a.feature = step.feature;
          a.prediction = InteractiveSession::threshold_mask(probability_grid(g.value(step.probability)));
          ++contributing;
        }
        if (contributing == 0) break;
        const T inv = T(1) / T(contributing);
        for (auto& p : model.parameters())
          for (auto& gv : p.grad) gv *= inv;
        adam_step<T>(model.parameters(), result.optimizer, adam);
        ++metrics.updates;
      }
    }
    if (metrics.interactions > 0) {
      metrics.mean_loss = loss_sum / double(metrics.interactions);
      metrics.mean_bce = bce_sum / double(metrics.interactions);
    }
    if (drag_count > 0) metrics.mean_drag_error = drag_sum / double(drag_count);
    metrics.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.epochs.push_back(metrics);
    if (on_epoch) on_epoch(metrics);
  }
  return result;
}

}  // namespace dctnet
