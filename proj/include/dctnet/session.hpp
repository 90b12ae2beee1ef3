#pragma once

#include <chrono>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dctnet/datasets.hpp"
#include "dctnet/error.hpp"
#include "dctnet/interactive.hpp"
#include "dctnet/png_io.hpp"

namespace dctnet {

// Row-major run lengths, alternating background/foreground and starting
// with a (possibly zero) background run.
struct MaskRle {
  int width = 0;
  int height = 0;
  std::vector<std::size_t> counts;

  bool operator==(const MaskRle&) const = default;
};

inline MaskRle rle_encode(const BinaryMask& m) {
  MaskRle r{m.width(), m.height(), {}};
  std::uint8_t current = 0;
  std::size_t run = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const std::uint8_t v = m[i] ? 1 : 0;
    if (v != current) {
      r.counts.push_back(run);
      run = 0;
      current = v;
    }
    ++run;
  }
  r.counts.push_back(run);
  return r;
}

inline BinaryMask rle_decode(const MaskRle& r) {
  if (r.width <= 0 || r.height <= 0) throw InvalidInput("RLE has invalid dimensions");
  BinaryMask m(r.width, r.height);
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (std::size_t run : r.counts) {
    if (run > m.size() - pos) throw InvalidInput("RLE runs exceed the mask size");
    for (std::size_t k = 0; k < run; ++k) m[pos + k] = value;
    pos += run;
    value ^= 1;
  }
  if (pos != m.size()) throw InvalidInput("RLE runs do not cover the mask");
  return m;
}

inline nlohmann::json to_json(const MaskRle& r) {
  return {{"width", r.width}, {"height", r.height}, {"counts", r.counts}};
}

inline MaskRle rle_from_json(const nlohmann::json& j) {
  try {
    return {j.at("width").get<int>(), j.at("height").get<int>(), j.at("counts").get<std::vector<std::size_t>>()};
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed RLE: ") + e.what());
  }
}

struct SessionInfo {
  std::string id;
  std::string model_id;
  int width = 0;  // padded size seen by the network
  int height = 0;
  int original_width = 0;
  int original_height = 0;
  bool padded() const { return width != original_width || height != original_height; }
};

struct InteractionSummary {
  std::size_t click_count = 0;
  std::optional<double> radius_used;
  std::string mask_url;
};

// Live sessions keyed by id. Requests to one session are serialized by its
// own mutex; distinct sessions proceed concurrently. Models are immutable.
class SessionManager {
 public:
  using ModelMap = std::map<std::string, std::shared_ptr<const SegModel<float>>>;

  explicit SessionManager(ModelMap models) : models_(std::move(models)) {}

  const ModelMap& models() const { return models_; }

  SessionInfo create(const std::string& png_bytes, const std::string& model_id) {
    const auto model = models_.find(model_id);
    if (model == models_.end()) throw NotFound("unknown model '" + model_id + "'");
    const Image original = png::decode_image(png_bytes);
    Image padded = pad_image(original, kSizeMultiple);
    auto entry = std::make_shared<Entry>();
    entry->info.model_id = model_id;
    entry->info.original_width = original.width;
    entry->info.original_height = original.height;
    entry->info.width = padded.width;
    entry->info.height = padded.height;
    entry->session.emplace(model->second, std::move(padded));
    entry->created = entry->updated = std::chrono::system_clock::now();

    std::unique_lock lock(map_mutex_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%06llu", static_cast<unsigned long long>(++counter_));
    entry->info.id = buf;
    sessions_[entry->info.id] = entry;
    return entry->info;
  }

  SessionInfo info(const std::string& id) const { return find(id)->info; }

  InteractionSummary apply(const std::string& id, const Click& click) {
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    const InteractionResult r = e->session->add_click(click);
    e->updated = std::chrono::system_clock::now();
    return {r.click_count, r.radius_used, mask_url(id)};
  }

  InteractionSummary undo(const std::string& id) {
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    e->session->undo();
    e->updated = std::chrono::system_clock::now();
    const auto& clicks = e->session->clicks();
    InteractionSummary s{clicks.size(), std::nullopt, clicks.empty() ? std::string() : mask_url(id)};
    if (!clicks.empty()) s.radius_used = clicks.back().radius;
    return s;
  }

  BinaryMask mask(const std::string& id) const {
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    return e->session->mask();
  }

  std::vector<Click> history(const std::string& id) const {
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    return e->session->clicks();
  }

  // Runs `fn` on the session under its lock.
  template <class F>
  auto with_session(const std::string& id, F&& fn) const {
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    return fn(static_cast<const InteractiveSession&>(*e->session));
  }

  void remove(const std::string& id) {
    std::unique_lock lock(map_mutex_);
    if (sessions_.erase(id) == 0) throw NotFound("unknown session '" + id + "'");
  }

  std::size_t size() const {
    std::shared_lock lock(map_mutex_);
    return sessions_.size();
  }

  static std::string mask_url(const std::string& id) { return "/sessions/" + id + "/mask?format=png"; }

 private:
  struct Entry {
    SessionInfo info;
    std::optional<InteractiveSession> session;
    std::chrono::system_clock::time_point created, updated;
    mutable std::mutex mutex;
  };

  std::shared_ptr<Entry> find(const std::string& id) const {
    std::shared_lock lock(map_mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFound("unknown session '" + id + "'");
    return it->second;
  }

  ModelMap models_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t counter_ = 0;
};

}  // namespace dctnet
