#pragma once

// Click-based evaluation: per-click IoU, NoC@tau, mIoU-vs-clicks curves,
// AuC, benchmark runs over datasets and JSON/CSV reports.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "dctnet/click_encoding.hpp"
#include "dctnet/datasets.hpp"
#include "dctnet/error.hpp"
#include "dctnet/interactive.hpp"
#include "dctnet/raster.hpp"
#include "dctnet/robot_user.hpp"

namespace dctnet {

// |pred & gt| / |pred | gt| over non-ignored pixels; 1.0 for an empty union.
inline double iou(const BinaryMask& pred, const BinaryMask& gt, const BinaryMask* ignore = nullptr) {
  require_same_size(pred, gt);
  if (ignore) require_same_size(*ignore, gt);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (ignore && (*ignore)[i]) continue;
    const bool p = pred[i] != 0, g = gt[i] != 0;
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

// 1-based index of the first IoU >= tau, or `cap` when never reached.
inline int noc(std::span<const double> iou_per_click, double tau, int cap) {
  if (iou_per_click.empty()) throw InvalidInput("noc needs at least one IoU value");
  if (cap < 1 || iou_per_click.size() > static_cast<std::size_t>(cap))
    throw InvalidInput("IoU sequence longer than the click cap");
  for (std::size_t i = 0; i < iou_per_click.size(); ++i)
    if (iou_per_click[i] >= tau) return static_cast<int>(i) + 1;
  return cap;
}

// Normalized area under the mIoU-vs-clicks curve: its arithmetic mean.
inline double auc(std::span<const double> curve) {
  if (curve.empty()) throw InvalidInput("auc needs a nonempty curve");
  double s = 0.0;
  for (double v : curve) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("curve values must lie in [0, 1]");
    s += v;
  }
  return s / double(curve.size());
}

enum class DragMode { user, auto_ };

inline std::string to_string(DragMode m) { return m == DragMode::user ? "user" : "auto"; }

inline DragMode drag_mode_from_string(const std::string& s) {
  if (s == "user") return DragMode::user;
  if (s == "auto") return DragMode::auto_;
  throw InvalidInput("unknown drag mode '" + s + "'");
}

struct ClickRecord {
  Click click;
  double iou = 0.0;

  bool operator==(const ClickRecord&) const = default;
};

struct InteractionTrace {
  std::string sample_id;
  std::vector<ClickRecord> records;
  bool reached_threshold = false;

  std::size_t clicks_used() const { return records.size(); }
  double final_iou() const { return records.empty() ? 0.0 : records.back().iou; }
  std::vector<double> ious() const {
    std::vector<double> v;
    for (const auto& r : records) v.push_back(r.iou);
    return v;
  }
  bool operator==(const InteractionTrace&) const = default;
};

struct BenchmarkConfig {
  double threshold = 0.9;
  int cap = 20;
  DragMode drag = DragMode::user;
  std::string encoding = "dynamic_gaussian";
  std::string model_id = "model";
  unsigned threads = 1;

  bool operator==(const BenchmarkConfig& o) const {
    return threshold == o.threshold && cap == o.cap && drag == o.drag && encoding == o.encoding &&
           model_id == o.model_id;
  }
};

struct BenchmarkReport {
  BenchmarkConfig config;
  std::vector<InteractionTrace> traces;
  std::vector<double> miou_curve;  // length == cap
  double mnoc = 0.0;
  double auc = 0.0;

  int noc_of(const InteractionTrace& t) const {
    const auto v = t.ious();
    return noc(v, config.threshold, config.cap);
  }
  bool operator==(const BenchmarkReport&) const = default;
};

// Stateful per-sample predictor driven by the robot user.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual BinaryMask add_click(const Click& click) = 0;
};

using PredictorFactory = std::function<std::unique_ptr<Predictor>(const Sample&)>;

class ModelPredictor : public Predictor {
 public:
  ModelPredictor(std::shared_ptr<const SegModel<float>> model, const Image& image)
      : session_(std::move(model), image) {}
  BinaryMask add_click(const Click& click) override {
    session_.add_click(click);
    return session_.mask();
  }
  const InteractiveSession& session() const { return session_; }

 private:
  InteractiveSession session_;
};

inline PredictorFactory model_predictor(std::shared_ptr<const SegModel<float>> model) {
  return [model](const Sample& s) -> std::unique_ptr<Predictor> { return std::make_unique<ModelPredictor>(model, s.image); };
}

// Returns the ground truth regardless of the input.
inline PredictorFactory oracle_predictor() {
  struct Oracle : Predictor {
    BinaryMask gt;
    BinaryMask add_click(const Click&) override { return gt; }
  };
  return [](const Sample& s) -> std::unique_ptr<Predictor> {
    auto p = std::make_unique<Oracle>();
    p->gt = s.gt;
    return p;
  };
}

inline PredictorFactory empty_predictor() {
  struct Empty : Predictor {
    int w, h;
    Empty(int w_, int h_) : w(w_), h(h_) {}
    BinaryMask add_click(const Click&) override { return BinaryMask(w, h); }
  };
  return [](const Sample& s) -> std::unique_ptr<Predictor> { return std::make_unique<Empty>(s.gt.width(), s.gt.height()); };
}

// Robot-user loop for one sample. In auto drag mode the robot's radius is
// withheld so the predictor supplies its own.
inline InteractionTrace simulate_trace(Predictor& predictor, const Sample& s, const BenchmarkConfig& cfg) {
  InteractionTrace trace;
  trace.sample_id = s.id;
  const BinaryMask* ignore = s.ignore ? &*s.ignore : nullptr;
  std::optional<BinaryMask> pred;
  for (int k = 0; k < cfg.cap; ++k) {
    const SimulatedInteraction sim = pred ? next_click(s.gt, *pred, ignore) : first_click(s.gt);
    if (sim.converged) break;
    Click click = *sim.click;
    if (cfg.drag == DragMode::auto_) click.radius.reset();
    pred = predictor.add_click(click);
    const double v = iou(*pred, s.gt, ignore);
    trace.records.push_back({click, v});
    if (v >= cfg.threshold) {
      trace.reached_threshold = true;
      break;
    }
  }
  if (trace.records.empty()) throw InvalidInput("sample " + s.id + " produced no clicks");
  return trace;
}

inline void summarize(BenchmarkReport& r) {
  const int cap = r.config.cap;
  r.miou_curve.assign(static_cast<std::size_t>(cap), 0.0);
  double noc_sum = 0.0;
  for (const auto& t : r.traces) {
    noc_sum += r.noc_of(t);
    for (int k = 0; k < cap; ++k) {
      // Early-stopped traces hold their final IoU.
      const std::size_t idx = std::min(static_cast<std::size_t>(k), t.records.size() - 1);
      r.miou_curve[static_cast<std::size_t>(k)] += t.records[idx].iou;
    }
  }
  const double n = double(r.traces.size());
  for (auto& v : r.miou_curve) v /= n;
  r.mnoc = noc_sum / n;
  r.auc = auc(r.miou_curve);
}

inline BenchmarkReport run_benchmark(const PredictorFactory& factory, const std::vector<Sample>& dataset,
                                     const BenchmarkConfig& cfg) {
  if (dataset.empty()) throw InvalidInput("benchmark dataset is empty");
  if (cfg.cap < 1) throw InvalidInput("click cap must be >= 1");
  if (!(cfg.threshold > 0.0 && cfg.threshold <= 1.0)) throw InvalidInput("IoU threshold must lie in (0, 1]");
  for (const auto& s : dataset) validate_sample(s);

  BenchmarkReport report;
  report.config = cfg;
  report.traces.resize(dataset.size());
  // Samples are independent; results land in dataset order.
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < dataset.size(); i = next++) {
      try {
        auto predictor = factory(dataset[i]);
        report.traces[i] = simulate_trace(*predictor, dataset[i], cfg);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(dataset.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  summarize(report);
  return report;
}

struct SimulationStep {
  Click click;
  InteractionMaps maps;
  Grid<double> probability;
  BinaryMask mask;
  double iou = 0.0;
};

// Robot-user run of `max_clicks` interactions on one sample with the model,
// keeping every intermediate map and mask. Stops early only when the
// prediction matches the ground truth.
inline std::vector<SimulationStep> simulate_sample(std::shared_ptr<const SegModel<float>> model, const Sample& s,
                                                   int max_clicks, DragMode drag) {
  validate_sample(s);
  if (max_clicks < 1) throw InvalidInput("max clicks must be >= 1");
  InteractiveSession session(model, s.image);
  const BinaryMask* ignore = s.ignore ? &*s.ignore : nullptr;
  std::vector<SimulationStep> steps;
  for (int k = 0; k < max_clicks; ++k) {
    const SimulatedInteraction sim = steps.empty() ? first_click(s.gt) : next_click(s.gt, steps.back().mask, ignore);
    if (sim.converged) break;
    Click click = *sim.click;
    if (drag == DragMode::auto_) click.radius.reset();
    const InteractionResult r = session.add_click(click);
    click.radius = r.radius_used;
    SimulationStep step;
    step.click = click;
    step.maps = maps_for(session.model(), session.clicks(), s.image.width, s.image.height);
    step.probability = r.probability;
    step.mask = session.mask();
    step.iou = iou(step.mask, s.gt, ignore);
    steps.push_back(std::move(step));
  }
  return steps;
}

// ---- serialization ----

inline constexpr int kReportSchemaVersion = 1;

inline nlohmann::json click_to_json(const Click& c) {
  nlohmann::json j{{"x", c.x}, {"y", c.y}, {"polarity", to_string(c.polarity)}};
  j["radius"] = c.radius ? nlohmann::json(*c.radius) : nlohmann::json(nullptr);
  return j;
}

inline Click click_from_json(const nlohmann::json& j) {
  Click c{j.at("x").get<double>(), j.at("y").get<double>(), polarity_from_string(j.at("polarity").get<std::string>()),
          std::nullopt};
  if (j.contains("radius") && !j.at("radius").is_null()) c.radius = j.at("radius").get<double>();
  return c;
}

inline nlohmann::json to_json(const BenchmarkReport& r) {
  nlohmann::json traces = nlohmann::json::array();
  for (const auto& t : r.traces) {
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& rec : t.records) recs.push_back({{"click", click_to_json(rec.click)}, {"iou", rec.iou}});
    traces.push_back({{"id", t.sample_id},
                      {"noc", r.noc_of(t)},
                      {"reached_threshold", t.reached_threshold},
                      {"records", recs}});
  }
  return {{"schema_version", kReportSchemaVersion},
          {"config",
           {{"threshold", r.config.threshold},
            {"cap", r.config.cap},
            {"drag", to_string(r.config.drag)},
            {"encoding", r.config.encoding},
            {"model_id", r.config.model_id}}},
          {"mnoc", r.mnoc},
          {"auc", r.auc},
          {"miou_curve", r.miou_curve},
          {"traces", traces}};
}

inline BenchmarkReport report_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != kReportSchemaVersion) throw DataError("unsupported report schema version");
    BenchmarkReport r;
    const auto& c = j.at("config");
    r.config.threshold = c.at("threshold").get<double>();
    r.config.cap = c.at("cap").get<int>();
    r.config.drag = drag_mode_from_string(c.at("drag").get<std::string>());
    r.config.encoding = c.at("encoding").get<std::string>();
    r.config.model_id = c.at("model_id").get<std::string>();
    r.mnoc = j.at("mnoc").get<double>();
    r.auc = j.at("auc").get<double>();
    r.miou_curve = j.at("miou_curve").get<std::vector<double>>();
    for (const auto& tj : j.at("traces")) {
      InteractionTrace t;
      t.sample_id = tj.at("id").get<std::string>();
      t.reached_threshold = tj.at("reached_threshold").get<bool>();
      for (const auto& rj : tj.at("records")) t.records.push_back({click_from_json(rj.at("click")), rj.at("iou").get<double>()});
      r.traces.push_back(std::move(t));
    }
    if (r.miou_curve.size() != static_cast<std::size_t>(r.config.cap)) throw DataError("curve length differs from cap");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

// One row per sample (id,noc,final_iou,clicks_used) and a final "mean" row.
inline std::string to_csv(const BenchmarkReport& r) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "id,noc,final_iou,clicks_used\n";
  double final_sum = 0.0, clicks_sum = 0.0;
  for (const auto& t : r.traces) {
    out << t.sample_id << ',' << r.noc_of(t) << ',' << t.final_iou() << ',' << t.clicks_used() << '\n';
    final_sum += t.final_iou();
    clicks_sum += double(t.clicks_used());
  }
  const double n = double(std::max<std::size_t>(1, r.traces.size()));
  out << "mean," << r.mnoc << ',' << final_sum / n << ',' << clicks_sum / n << '\n';
  return out.str();
}

// mIoU after clicks 1..cap, one "click,miou" row each.
inline std::string curve_csv(const BenchmarkReport& r) {
  std::ostringstream out;
  out << std::setprecision(17) << "click,miou\n";
  for (std::size_t k = 0; k < r.miou_curve.size(); ++k) out << k + 1 << ',' << r.miou_curve[k] << '\n';
  return out.str();
}

enum class ReportFormat { json, csv };

inline void emit_report(const BenchmarkReport& r, const std::string& path, ReportFormat format) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write report to '" + path + "'");
  if (format == ReportFormat::json)
    out << to_json(r).dump(2) << '\n';
  else
    out << to_csv(r);
  if (!out) throw DataError("write failed for '" + path + "'");
}

inline BenchmarkReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  return report_from_json(j);
}

}  // namespace dctnet
