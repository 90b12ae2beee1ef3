#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "dctnet/segnet.hpp"

using namespace dctnet;

namespace {

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double scale) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST(Aggregate, FirstClickInitializesAndNegativeFirstIsRejected) {
  const std::vector<double> q{1.0, 2.0, 3.0};
  const auto f = aggregate(std::nullopt, q, Polarity::positive);
  EXPECT_EQ(f.vector, q);
  EXPECT_EQ(f.interaction_index, 1);
  EXPECT_THROW(aggregate(std::nullopt, q, Polarity::negative), ProtocolError);
}

TEST(Aggregate, PositiveIsExactMidpoint) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto f = random_vector(rng, 17, 3.0), q = random_vector(rng, 17, 0.5);
    const auto out = aggregate(AggregatedClickFeature{f, 1}, q, Polarity::positive);
    for (std::size_t k = 0; k < f.size(); ++k) ASSERT_EQ(out.vector[k], (f[k] + q[k]) / 2.0);
    ASSERT_EQ(out.interaction_index, 2);
  }
}

TEST(Aggregate, RejectionIsOrthogonalAndNeverGrows) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> log_scale(-3.0, 3.0);
  for (int i = 0; i < 10000; ++i) {
    const std::size_t n = 2 + rng() % 40;
    const auto f = random_vector(rng, n, std::pow(10.0, log_scale(rng)));
    auto q = random_vector(rng, n, std::pow(10.0, log_scale(rng)));
    if (i % 10 == 0)  // nearly parallel pairs
      for (std::size_t k = 0; k < n; ++k) q[k] = 2.0 * f[k] + 1e-9 * q[k];
    const auto out = aggregate(AggregatedClickFeature{f, 3}, q, Polarity::negative);
    const double fn = norm(f), qn = norm(q);
    ASSERT_LE(norm(out.vector), fn * (1.0 + 1e-12)) << i;
    if (out.vector == f) {
      // Degenerate fallback: only allowed when the true rejection is negligible.
      double rej2 = 0.0;
      const double proj = dot(f, q) / (qn * qn);
      for (std::size_t k = 0; k < n; ++k) rej2 += (f[k] - proj * q[k]) * (f[k] - proj * q[k]);
      ASSERT_LT(std::sqrt(rej2), 1e-7 * fn) << i;
      continue;
    }
    ASSERT_LE(std::abs(dot(out.vector, q)) / qn, 1e-6 * fn) << i;
  }
}

TEST(Aggregate, HandExamples) {
  const AggregatedClickFeature a{{2.0, 0.0}, 1}, b{{1.0, 1.0}, 1}, c{{3.0, 0.0}, 1};
  EXPECT_EQ(aggregate(a, std::vector<double>{0.0, 2.0}, Polarity::positive).vector, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(aggregate(b, std::vector<double>{2.0, 0.0}, Polarity::negative).vector, (std::vector<double>{0.0, 1.0}));
  EXPECT_EQ(aggregate(c, std::vector<double>{1.0, 0.0}, Polarity::negative).vector, (std::vector<double>{3.0, 0.0}));
}

TEST(Aggregate, RejectionHandValueAndFallbacks) {
  const std::vector<double> f{3.0, 4.0}, q{1.0, 0.0};
  EXPECT_EQ(aggregate(AggregatedClickFeature{f, 1}, q, Polarity::negative).vector, (std::vector<double>{0.0, 4.0}));
  // Zero query: previous aggregate kept.
  EXPECT_EQ(aggregate(AggregatedClickFeature{f, 1}, std::vector<double>{0.0, 0.0}, Polarity::negative).vector, f);
  // Exactly parallel: rejection vanishes, previous aggregate kept.
  EXPECT_EQ(aggregate(AggregatedClickFeature{f, 1}, std::vector<double>{6.0, 8.0}, Polarity::negative).vector, f);
  EXPECT_THROW(aggregate(AggregatedClickFeature{f, 1}, std::vector<double>{1.0}, Polarity::negative), InvalidInput);
  EXPECT_THROW(aggregate(AggregatedClickFeature{f, 1}, std::vector<double>{NAN, 1.0}, Polarity::positive),
               InvalidInput);
}

TEST(ConditionedInstanceNorm, MatchesScaleAndShift) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0), g(0.05, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = 1 + static_cast<int>(rng() % 6), h = 4 + static_cast<int>(rng() % 12), w = 4 + static_cast<int>(rng() % 12);
    Tensor<double> x(c, h, w);
    for (int ch = 0; ch < c; ++ch) {
      const double offset = u(rng), spread = g(rng) * 4.0;
      for (int i = 0; i < h * w; ++i) x.channel(ch)[i] = offset + spread * u(rng);
    }
    std::vector<double> gamma(static_cast<std::size_t>(c)), beta(static_cast<std::size_t>(c));
    for (int ch = 0; ch < c; ++ch) {
      gamma[static_cast<std::size_t>(ch)] = g(rng);
      beta[static_cast<std::size_t>(ch)] = u(rng);
    }
    const auto y = conditioned_instance_norm<double>(x, gamma, beta);
    for (int ch = 0; ch < c; ++ch) {
      double mean = 0.0, var = 0.0;
      const double* p = y.channel(ch);
      for (int i = 0; i < h * w; ++i) mean += p[i];
      mean /= h * w;
      for (int i = 0; i < h * w; ++i) var += (p[i] - mean) * (p[i] - mean);
      const double std_dev = std::sqrt(var / (h * w));
      ASSERT_NEAR(mean, beta[static_cast<std::size_t>(ch)], 1e-4);
      ASSERT_NEAR(std_dev, gamma[static_cast<std::size_t>(ch)], 1e-3);
    }
  }
}

TEST(ConditionedInstanceNorm, HandValuesAndConstantChannel) {
  Tensor<double> x(2, 1, 4);
  for (int i = 0; i < 4; ++i) {
    x(0, 0, i) = i + 1.0;
    x(1, 0, i) = 7.0;
  }
  const std::vector<double> gamma{1.0, 2.0}, beta{0.0, -0.5};
  const auto y = conditioned_instance_norm<double>(x, gamma, beta);
  const double s = std::sqrt(1.25 + 1e-5);
  EXPECT_NEAR(y(0, 0, 0), -1.5 / s, 1e-15);
  EXPECT_NEAR(y(0, 0, 0), -1.3416, 1e-4);
  EXPECT_NEAR(y(0, 0, 2), 0.4472, 1e-4);
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(y(1, 0, i), -0.5);
  EXPECT_THROW(conditioned_instance_norm<double>(x, std::vector<double>{1.0}, std::vector<double>{0.0}), InvalidInput);
}

TEST(ClickFeature, LevelCoordinatesAndExtraction) {
  EXPECT_DOUBLE_EQ(level_coordinate(0.0, 64, 32), 0.0);
  EXPECT_DOUBLE_EQ(level_coordinate(10.0, 64, 32), 5.0);
  EXPECT_DOUBLE_EQ(level_coordinate(63.0, 64, 8), 7.0);  // clamped to the last sample

  // Level values encode their own coordinates, so the sample is predictable.
  std::vector<Tensor<double>> levels;
  for (int s : {32, 16, 8}) {
    Tensor<double> t(2, s, s);
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        t(0, y, x) = x;
        t(1, y, x) = y;
      }
    levels.push_back(t);
  }
  const auto q = extract_click_feature<double>(levels, Click{12.0, 20.0, Polarity::positive, {}}, 64, 64);
  ASSERT_EQ(q.size(), 6u);
  EXPECT_DOUBLE_EQ(q[0], 6.0);
  EXPECT_DOUBLE_EQ(q[1], 10.0);
  EXPECT_DOUBLE_EQ(q[2], 3.0);
  EXPECT_DOUBLE_EQ(q[3], 5.0);
  EXPECT_DOUBLE_EQ(q[4], 1.5);
  EXPECT_DOUBLE_EQ(q[5], 2.5);
  EXPECT_THROW(extract_click_feature<double>(levels, Click{64.0, 0.0, Polarity::positive, {}}, 64, 64), InvalidInput);
}

TEST(ConditioningHead, LayoutAndPositiveScale) {
  ModelConfig cfg;
  cfg.encoder_widths = {4, 4, 6, 8};
  cfg.decoder_widths = {5, 3, 2};
  cfg.head_hidden = 7;
  SegModel<double> m(cfg, 9);
  const auto head = m.conditioning_head();
  EXPECT_EQ(head.input_dim, 14);
  EXPECT_EQ(head.output_dim(), 20);
  std::mt19937_64 rng(4);
  // A large random fc2 makes raw outputs span both signs.
  auto& w2 = m.param("feature_head.fc2.weight");
  std::normal_distribution<double> big(0.0, 20.0);
  for (auto& v : w2.value) v = big(rng);
  const auto stats = predict_conditioning(AggregatedClickFeature{random_vector(rng, 14, 1.0), 1}, head);
  for (int l = 0; l < kConditionedLevels; ++l) {
    EXPECT_EQ(stats.gamma[static_cast<std::size_t>(l)].size(), static_cast<std::size_t>(cfg.decoder_widths[static_cast<std::size_t>(l)]));
    for (double gv : stats.gamma[static_cast<std::size_t>(l)]) EXPECT_GE(gv, kGammaFloor);
  }
  EXPECT_THROW(predict_conditioning(AggregatedClickFeature{{1.0}, 1}, head), InvalidInput);
}

TEST(ConditioningHead, ZeroWeightsGiveSoftplusZero) {
  SegModel<double> m(ModelConfig{}, 1);
  for (const char* n : {"feature_head.fc1.weight", "feature_head.fc1.bias", "feature_head.fc2.weight", "feature_head.fc2.bias"})
    for (auto& v : m.param(n).value) v = 0.0;
  const auto stats = predict_conditioning(
      AggregatedClickFeature{std::vector<double>(static_cast<std::size_t>(ModelConfig{}.click_feature_dim()), 0.3), 1},
      m.conditioning_head());
  for (int l = 0; l < kConditionedLevels; ++l) {
    for (double gv : stats.gamma[static_cast<std::size_t>(l)]) EXPECT_NEAR(gv, std::log(2.0) + 1e-3, 1e-15);
    for (double bv : stats.beta[static_cast<std::size_t>(l)]) EXPECT_EQ(bv, 0.0);
  }
}

TEST(ConditioningHead, InitialModelStartsNearIdentityNorm) {
  SegModel<double> m(ModelConfig{}, 1);
  std::mt19937_64 rng(5);
  const auto stats =
      predict_conditioning(AggregatedClickFeature{random_vector(rng, ModelConfig{}.click_feature_dim(), 1.0), 1},
                           m.conditioning_head());
  for (int l = 0; l < kConditionedLevels; ++l) {
    for (double gv : stats.gamma[static_cast<std::size_t>(l)]) EXPECT_NEAR(gv, 1.0, 0.05);
    for (double bv : stats.beta[static_cast<std::size_t>(l)]) EXPECT_NEAR(bv, 0.0, 0.05);
  }
}
