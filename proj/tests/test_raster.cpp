#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dctnet/raster.hpp"
#include "oracles.hpp"

using namespace dctnet;

TEST(Edt, MatchesBruteForceOnRandomMasks) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const int w = 1 + static_cast<int>(rng() % 20), h = 1 + static_cast<int>(rng() % 20);
    const double density = (trial % 5) / 4.0;
    const BinaryMask m = oracle::random_mask(rng, w, h, density);
    const DistanceMap d = edt(m);
    const auto expected = oracle::edt(m);
    for (std::size_t i = 0; i < m.size(); ++i) ASSERT_EQ(d[i], expected[i]) << "trial " << trial << " pixel " << i;
  }
}

TEST(Edt, HandValues) {
  // Single foreground pixel: nearest background is a 4-neighbour.
  BinaryMask m(5, 5);
  m.set(2, 2);
  EXPECT_EQ(edt(m)(2, 2), 1.0);
  EXPECT_EQ(edt(m)(0, 0), 0.0);

  // 5x5 block inside a 7x7 image: centre is 3 from the ring.
  BinaryMask block(7, 7);
  for (int y = 1; y < 6; ++y)
    for (int x = 1; x < 6; ++x) block.set(x, y);
  EXPECT_EQ(edt(block)(3, 3), 3.0);

  // Diagonal-only background: distance sqrt(2).
  BinaryMask diag(3, 3, true);
  diag.set(0, 0, false);
  diag.set(2, 0, false);
  diag.set(0, 2, false);
  diag.set(2, 2, false);
  EXPECT_EQ(edt(diag)(1, 1), std::sqrt(2.0));
}

TEST(Edt, AllForegroundMeasuresDistanceToBorder) {
  BinaryMask m(6, 4, true);
  const DistanceMap d = edt(m);
  EXPECT_EQ(d(0, 0), 1.0);
  EXPECT_EQ(d(2, 1), 2.0);
  EXPECT_EQ(d(5, 3), 1.0);
}

TEST(Edt, AllBackgroundIsZero) {
  const DistanceMap d = edt(BinaryMask(4, 4));
  for (double v : d.values()) EXPECT_EQ(v, 0.0);
}

TEST(Edt, RejectsEmptyMask) { EXPECT_THROW(edt(BinaryMask{}), InvalidInput); }

TEST(ConnectedComponents, MatchesFloodFill) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int w = 1 + static_cast<int>(rng() % 24), h = 1 + static_cast<int>(rng() % 24);
    const BinaryMask m = oracle::random_mask(rng, w, h, 0.2 + 0.6 * (trial % 4) / 3.0);
    for (const bool eight : {false, true}) {
      const auto cc = connected_components(m, eight ? Connectivity::eight : Connectivity::four);
      const auto expected = oracle::flood_labels(m, eight);
      std::size_t total = 0;
      for (std::size_t i = 0; i < m.size(); ++i) {
        ASSERT_EQ(cc.labels[i], expected[i]);
        total += expected[i] != 0;
      }
      std::size_t summed = 0;
      for (int l = 1; l <= cc.count(); ++l) {
        const auto n = static_cast<std::size_t>(std::count(expected.begin(), expected.end(), l));
        ASSERT_EQ(cc.size_of(l), n);
        summed += n;
      }
      ASSERT_EQ(summed, total);
    }
  }
}

TEST(ConnectedComponents, DiagonalTouchDiffersByConnectivity) {
  BinaryMask m(2, 2);
  m.set(0, 0);
  m.set(1, 1);
  EXPECT_EQ(connected_components(m, Connectivity::four).count(), 2);
  EXPECT_EQ(connected_components(m, Connectivity::eight).count(), 1);
}

TEST(ConnectedComponents, UShapeMergesLate) {
  // Two arms that only join on the last row need the union step.
  BinaryMask m(5, 4);
  for (int y = 0; y < 4; ++y) {
    m.set(0, y);
    m.set(4, y);
  }
  for (int x = 0; x < 5; ++x) m.set(x, 3);
  const auto cc = connected_components(m);
  EXPECT_EQ(cc.count(), 1);
  EXPECT_EQ(cc.size_of(1), m.count());
}

TEST(MaskOps, XorAndSizeChecks) {
  BinaryMask a(3, 1), b(3, 1);
  a.set(0, 0);
  a.set(1, 0);
  b.set(1, 0);
  b.set(2, 0);
  const BinaryMask x = mask_xor(a, b);
  EXPECT_TRUE(x.test(0, 0));
  EXPECT_FALSE(x.test(1, 0));
  EXPECT_TRUE(x.test(2, 0));
  EXPECT_THROW(mask_xor(a, BinaryMask(2, 1)), InvalidInput);
}

TEST(Bilinear, InterpolatesHandValues) {
  Tensor<double> t(2, 2, 2);
  // channel 0: [[0, 1], [2, 3]]; channel 1 = 10 * channel 0
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      t(0, y, x) = 2.0 * y + x;
      t(1, y, x) = 10.0 * (2.0 * y + x);
    }
  EXPECT_EQ(bilinear_sample(t, 0.0, 0.0)[0], 0.0);
  EXPECT_EQ(bilinear_sample(t, 1.0, 1.0)[0], 3.0);
  EXPECT_DOUBLE_EQ(bilinear_sample(t, 0.5, 0.5)[0], 1.5);
  EXPECT_DOUBLE_EQ(bilinear_sample(t, 0.25, 0.0)[1], 2.5);
  EXPECT_DOUBLE_EQ(bilinear_sample(t, 0.0, 0.75)[0], 1.5);
  EXPECT_THROW(bilinear_sample(t, 1.01, 0.0), InvalidInput);
  EXPECT_THROW(bilinear_sample(t, -0.01, 0.0), InvalidInput);
}

TEST(Bilinear, ReproducesAffineFields) {
  // Bilinear interpolation is exact on affine functions.
  Tensor<double> t(1, 5, 7);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) t(0, y, x) = 0.3 * x - 1.7 * y + 2.0;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ux(0, 6), uy(0, 4);
  for (int i = 0; i < 200; ++i) {
    const double x = ux(rng), y = uy(rng);
    EXPECT_NEAR(bilinear_sample(t, x, y)[0], 0.3 * x - 1.7 * y + 2.0, 1e-12);
  }
}

TEST(Resize, NearestKeepsBlocksAndBilinearKeepsConstants) {
  BinaryMask m(2, 2);
  m.set(1, 0);
  const BinaryMask up = resize_nearest(m, 4, 4);
  EXPECT_TRUE(up.test(2, 0) && up.test(3, 1));
  EXPECT_FALSE(up.test(1, 0) || up.test(2, 2));

  Tensor<float> c(3, 5, 5);
  for (auto& v : c.data) v = 0.25f;
  const auto r = resize_bilinear(c, 8, 3);
  EXPECT_EQ(r.width, 8);
  EXPECT_EQ(r.height, 3);
  for (float v : r.data) EXPECT_FLOAT_EQ(v, 0.25f);
}
