#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "dctnet/eval.hpp"
#include "oracles.hpp"

using namespace dctnet;

namespace {

// Reveals the ground-truth component under each positive click; negative
// clicks remove nothing. Converges in one click per component.
class RevealPredictor : public Predictor {
 public:
  explicit RevealPredictor(const Sample& s)
      : gt_(s.gt), labels_(connected_components(s.gt, Connectivity::four)), shown_(s.gt.width(), s.gt.height()) {}
  BinaryMask add_click(const Click& c) override {
    const int label = labels_.labels[static_cast<std::size_t>(c.y) * gt_.width() + static_cast<std::size_t>(c.x)];
    if (c.positive() && label > 0)
      for (std::size_t i = 0; i < gt_.size(); ++i)
        if (labels_.labels[i] == label) shown_[i] = 1;
    return shown_;
  }

 private:
  BinaryMask gt_;
  ComponentLabeling labels_;
  BinaryMask shown_;
};

Sample three_squares() {
  Sample s;
  s.id = "three";
  s.image = Image(3, 24, 24, 0.5f);
  s.gt = BinaryMask(24, 24);
  for (const int ox : {1, 9, 17})
    for (int y = 2; y < 8; ++y)
      for (int x = ox; x < ox + 6; ++x) s.gt.set(x, y);
  return s;
}

}  // namespace

TEST(Metrics, IouHandValues) {
  BinaryMask p(5, 1), g(5, 1);
  for (int x : {0, 1, 2, 3}) p.set(x, 0);
  for (int x : {1, 2, 3, 4}) g.set(x, 0);
  EXPECT_DOUBLE_EQ(iou(p, g), 0.6);
  EXPECT_DOUBLE_EQ(iou(BinaryMask(3, 3), BinaryMask(3, 3)), 1.0);
  BinaryMask ignore(5, 1);
  ignore.set(0, 0);
  ignore.set(4, 0);
  EXPECT_DOUBLE_EQ(iou(p, g, &ignore), 1.0);
  EXPECT_THROW(iou(p, BinaryMask(4, 1)), InvalidInput);
}

TEST(Metrics, IouMatchesOracle) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 100; ++i) {
    const auto a = oracle::random_mask(rng, 13, 9, 0.4), b = oracle::random_mask(rng, 13, 9, 0.4);
    ASSERT_DOUBLE_EQ(iou(a, b), oracle::iou(a, b));
  }
}

TEST(Metrics, NocExamples) {
  const std::vector<double> a{0.5, 0.85, 0.91, 0.95};
  EXPECT_EQ(noc(a, 0.9, 20), 3);
  EXPECT_EQ(noc(a, 0.85, 20), 2);
  EXPECT_EQ(noc(a, 0.99, 20), 20);
  EXPECT_EQ(noc(std::vector<double>{0.9}, 0.9, 20), 1);
  EXPECT_THROW(noc(std::vector<double>{}, 0.9, 20), InvalidInput);
  EXPECT_THROW(noc(a, 0.9, 3), InvalidInput);
}

TEST(Metrics, NocIsMonotoneInThreshold) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> v(1 + rng() % 20);
    for (auto& x : v) x = u(rng);
    int prev = 0;
    for (double tau = 0.05; tau <= 1.0; tau += 0.05) {
      const int n = noc(v, tau, 20);
      ASSERT_GE(n, prev);
      prev = n;
    }
  }
}

TEST(Metrics, AucIsTheCurveMean) {
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.3, 0.5, 0.6, 0.7}), 0.525);
  EXPECT_DOUBLE_EQ(auc(std::vector<double>(20, 1.0)), 1.0);
  EXPECT_THROW(auc(std::vector<double>{}), InvalidInput);
  EXPECT_THROW(auc(std::vector<double>{1.2}), InvalidInput);
}

TEST(Benchmark, OracleAndEmptyPredictors) {
  const auto data = generate_synthetic(12, 32, 1000);
  BenchmarkConfig cfg;
  const auto oracle = run_benchmark(oracle_predictor(), data, cfg);
  EXPECT_DOUBLE_EQ(oracle.mnoc, 1.0);
  EXPECT_DOUBLE_EQ(oracle.auc, 1.0);
  ASSERT_EQ(oracle.miou_curve.size(), 20u);
  const auto empty = run_benchmark(empty_predictor(), data, cfg);
  EXPECT_DOUBLE_EQ(empty.mnoc, 20.0);
  EXPECT_DOUBLE_EQ(empty.auc, 0.0);
  for (const auto& t : empty.traces) EXPECT_EQ(t.clicks_used(), 20u);
}

TEST(Benchmark, CorrectivePredictorNeedsOneClickPerRegion) {
  const std::vector<Sample> data{three_squares()};
  const PredictorFactory reveal = [](const Sample& s) -> std::unique_ptr<Predictor> {
    return std::make_unique<RevealPredictor>(s);
  };
  const auto r = run_benchmark(reveal, data, BenchmarkConfig{});
  EXPECT_DOUBLE_EQ(r.mnoc, 3.0);
  ASSERT_EQ(r.traces[0].clicks_used(), 3u);
  EXPECT_NEAR(r.miou_curve[0], 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.miou_curve[1], 2.0 / 3.0, 1e-12);
  // Held at 1 after convergence.
  for (std::size_t k = 2; k < r.miou_curve.size(); ++k) EXPECT_EQ(r.miou_curve[k], 1.0);
  EXPECT_NEAR(r.auc, (1.0 / 3.0 + 2.0 / 3.0 + 18.0) / 20.0, 1e-12);
}

TEST(Benchmark, AutoModeWithholdsRadiusAndThreadsAgree) {
  const auto data = generate_synthetic(6, 32, 3);
  BenchmarkConfig cfg;
  cfg.drag = DragMode::auto_;
  cfg.cap = 4;
  const auto r = run_benchmark(empty_predictor(), data, cfg);
  for (const auto& t : r.traces)
    for (const auto& rec : t.records) EXPECT_FALSE(rec.click.radius);
  cfg.threads = 3;
  EXPECT_EQ(run_benchmark(empty_predictor(), data, cfg), r);
  EXPECT_THROW(run_benchmark(empty_predictor(), {}, cfg), InvalidInput);
  EXPECT_EQ(drag_mode_from_string("auto"), DragMode::auto_);
  EXPECT_THROW(drag_mode_from_string("manual"), InvalidInput);
}

TEST(Report, JsonRoundTripAndCsvShape) {
  const std::vector<Sample> data{three_squares(), generate_synthetic(1, 24, 2)[0]};
  const PredictorFactory reveal = [](const Sample& s) -> std::unique_ptr<Predictor> {
    return std::make_unique<RevealPredictor>(s);
  };
  BenchmarkConfig cfg;
  cfg.cap = 7;
  const auto r = run_benchmark(reveal, data, cfg);
  EXPECT_EQ(report_from_json(to_json(r)), r);
  EXPECT_EQ(to_json(r)["schema_version"], kReportSchemaVersion);

  std::istringstream csv(to_csv(r));
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(csv, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), data.size() + 2);
  EXPECT_EQ(lines.front(), "id,noc,final_iou,clicks_used");
  EXPECT_TRUE(lines.back().starts_with("mean,"));
  EXPECT_TRUE(lines[1].starts_with("three,3,1,3"));

  std::istringstream curve(curve_csv(r));
  int rows = 0;
  while (std::getline(curve, line)) ++rows;
  EXPECT_EQ(rows, cfg.cap + 1);

  const auto path = (std::filesystem::temp_directory_path() / "dctnet_report_test.json").string();
  emit_report(r, path, ReportFormat::json);
  EXPECT_EQ(load_report(path), r);
  std::filesystem::remove(path);
  EXPECT_THROW(report_from_json(nlohmann::json{{"schema_version", 99}}), DataError);
}

TEST(Simulation, KeepsEveryIntermediateStep) {
  ModelConfig mc;
  mc.encoder_widths = {4, 4, 4, 4};
  mc.decoder_widths = {4, 4, 4};
  mc.head_hidden = 4;
  mc.drag_hidden = 4;
  const auto model = std::make_shared<const SegModel<float>>(mc, 1);
  const auto s = generate_synthetic(1, 32, 5)[0];
  const auto steps = simulate_sample(model, s, 3, DragMode::auto_);
  ASSERT_FALSE(steps.empty());
  ASSERT_LE(steps.size(), 3u);
  for (const auto& st : steps) {
    ASSERT_TRUE(st.click.radius);
    EXPECT_GT(*st.click.radius, 1.0);
    EXPECT_EQ(st.mask.width(), 32);
    EXPECT_DOUBLE_EQ(st.iou, iou(st.mask, s.gt));
  }
}
