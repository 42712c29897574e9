#include <gtest/gtest.h>

#include <cmath>

#include "aur/stats.hpp"

using namespace aur;

TEST(Descriptive, MeanMedianStddev) {
  EXPECT_DOUBLE_EQ(mean_of({1.0, 2.0, 6.0}), 3.0);
  EXPECT_DOUBLE_EQ(median_of({5.0, 1.0, 3.0}), 3.0);
  EXPECT_DOUBLE_EQ(median_of({4.0, 1.0, 3.0, 2.0}), 2.5);
  EXPECT_TRUE(std::isnan(median_of({})));
  EXPECT_DOUBLE_EQ(stddev_of({2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0}), std::sqrt(32.0 / 7.0));
}

TEST(MannWhitney, ExactSmallSampleValues) {
  // All 20 splits of six ranks into two triples are equally likely.
  const RankTest a = mann_whitney_less({1, 2, 3}, {4, 5, 6});
  EXPECT_TRUE(a.exact);
  EXPECT_DOUBLE_EQ(a.u, 0.0);
  EXPECT_NEAR(a.p_value, 1.0 / 20.0, 1e-15);
  const RankTest b = mann_whitney_less({1, 2, 4}, {3, 5, 6});
  EXPECT_DOUBLE_EQ(b.u, 1.0);
  EXPECT_NEAR(b.p_value, 2.0 / 20.0, 1e-15);
  const RankTest c = mann_whitney_less({4, 5, 6}, {1, 2, 3});
  EXPECT_DOUBLE_EQ(c.u, 9.0);
  EXPECT_NEAR(c.p_value, 1.0, 1e-15);
  // 5 vs 5: P(U = 0) = 1 / C(10, 5).
  EXPECT_NEAR(mann_whitney_less({1, 2, 3, 4, 5}, {6, 7, 8, 9, 10}).p_value, 1.0 / 252.0, 1e-15);
}

TEST(MannWhitney, TiesUseCorrectedNormalApproximation) {
  const RankTest t = mann_whitney_less({1, 1, 2}, {2, 3, 3});
  EXPECT_FALSE(t.exact);
  EXPECT_DOUBLE_EQ(t.u, 0.5);
  // mu = 4.5, var = 9/12 (7 - 18/30) = 4.8, continuity +0.5.
  const double z = (0.5 - 4.5 + 0.5) / std::sqrt(4.8);
  EXPECT_NEAR(t.z, z, 1e-12);
  EXPECT_NEAR(t.p_value, 0.5 * std::erfc(-z / std::sqrt(2.0)), 1e-12);
}

TEST(MannWhitney, ExactAgreesWithNormalForModerateSamples) {
  Rng rng(9);
  std::vector<double> x, y, xt, yt;
  for (int i = 0; i < 20; ++i) {
    x.push_back(rng.normal());
    y.push_back(rng.normal() + 0.5);
  }
  const RankTest exact = mann_whitney_less(x, y);
  ASSERT_TRUE(exact.exact);
  // Appending a tied pair forces the normal path while barely changing U.
  xt = x;
  yt = y;
  xt.push_back(100.0);
  yt.push_back(100.0);
  const RankTest approx = mann_whitney_less(xt, yt);
  ASSERT_FALSE(approx.exact);
  EXPECT_NEAR(exact.p_value, approx.p_value, 0.02);
}

TEST(MannWhitney, ConstantSamplesAndEmptyInput) {
  EXPECT_DOUBLE_EQ(mann_whitney_less({1, 1}, {1, 1, 1}).p_value, 1.0);
  EXPECT_THROW(mann_whitney_less({}, {1.0}), InvalidInput);
}
