#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "aur/acquisition.hpp"

using namespace aur;

namespace {

GPModel small_gp(Rng& rng) {
  Mat x(6, 2);
  Vec y(6);
  for (Index i = 0; i < 6; ++i) {
    x(i, 0) = rng.uniform(-1, 1);
    x(i, 1) = rng.uniform(-1, 1);
    y[i] = std::sin(2 * x(i, 0)) + x(i, 1);
  }
  GPHyperparams h;
  h.length_scales = Vec::Constant(2, 0.6);
  h.signal_variance = 1.0;
  h.noise_variance = 1e-4;
  return GPModel::from_parts(Normalization::fit(x, y), h, x, y);
}

Mat uniform_points(Rng& rng, Index n, double lo, double hi) {
  Mat c(n, 2);
  for (Index i = 0; i < n; ++i) {
    c(i, 0) = rng.uniform(lo, hi);
    c(i, 1) = rng.uniform(lo, hi);
  }
  return c;
}

}  // namespace

TEST(Certainty, PhiOfOneFromErf) {
  EXPECT_NEAR(model_certainty(1.0), 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0))), 1e-15);
  EXPECT_NEAR(model_certainty(1.0), 0.84134, 1e-5);
  EXPECT_DOUBLE_EQ(model_certainty(0.0), 1.0);
  EXPECT_DOUBLE_EQ(model_uncertainty(0.0), 0.0);
  EXPECT_THROW(model_certainty(-1.0), InvalidInput);
}

TEST(Certainty, ComplementsSumToOne) {
  for (double s : {1e-3, 0.05, 0.3, 1.0, 2.0, 50.0, 1e6}) {
    EXPECT_NEAR(model_certainty(s) + model_uncertainty(s), 1.0, 1e-15) << s;
    EXPECT_GE(model_certainty(s), 0.5);
    EXPECT_LE(model_certainty(s), 1.0);
  }
}

TEST(Certainty, LogUncertaintyMatchesDirectFormAndTail) {
  for (double s : {0.03, 0.05, 0.1, 0.125, 0.13, 0.5, 1.0, 10.0}) {
    EXPECT_NEAR(log_model_uncertainty(s), std::log(model_uncertainty(s)),
                1e-9 * std::abs(std::log(model_uncertainty(s))))
        << s;
  }
  // Reference values of log Phi(-1/sigma) from 30-digit arithmetic.
  EXPECT_NEAR(log_model_uncertainty(0.05), -203.917155371097241677, 1e-9);
  EXPECT_NEAR(log_model_uncertainty(0.02), -1254.83136113941984919, 1e-8);
  EXPECT_NEAR(log_model_uncertainty(0.01), -5005.52420869420488044, 1e-7);
  EXPECT_EQ(model_uncertainty(0.01), 0.0);  // the direct form underflows here
  EXPECT_EQ(log_model_uncertainty(0.0), -std::numeric_limits<double>::infinity());
}

TEST(ConfidenceIndex, BoundedAndMeanOfCertainties) {
  Rng rng(1);
  const GPModel gp = small_gp(rng);
  const Mat s = uniform_points(rng, 300, -3, 3);
  const double ci = confidence_index(gp, s);
  EXPECT_GE(ci, 0.5);
  EXPECT_LE(ci, 1.0);
  double oracle = 0.0;
  for (Index i = 0; i < s.rows(); ++i) {
    oracle += model_certainty(gp.predict(s.row(i).transpose()).std_normalized);
  }
  EXPECT_NEAR(ci, oracle / 300.0, 1e-9);
  EXPECT_THROW(confidence_index(gp, Mat(0, 2)), InvalidInput);
}

TEST(ConfidenceReport, ComponentsAreConsistent) {
  Rng rng(2);
  const GPModel gp = small_gp(rng);
  const Mat s = uniform_points(rng, 100, -2, 2);
  const Vec p = Vec::Constant(100, 0.25);
  const ConfidenceReport r = confidence_report(gp, p, s);
  for (Index i = 0; i < 100; ++i) {
    EXPECT_NEAR(r.certainty[i] + r.uncertainty[i], 1.0, 1e-15);
    EXPECT_NEAR(r.index[i], r.uncertainty[i] * 0.25, 1e-15);
  }
  EXPECT_THROW(confidence_report(gp, Vec::Ones(3), s), InvalidInput);
}

TEST(Selection, PicksLargestProduct) {
  // U_m = {0.2, 0.5, 0.3} with equal P_i = 0.2 gives U = {0.04, 0.10, 0.06}.
  ConfidenceReport r;
  r.uncertainty = Vec{{0.2, 0.5, 0.3}};
  r.input_probability = Vec::Constant(3, 0.2);
  r.index = r.uncertainty.cwiseProduct(r.input_probability);
  r.log_uncertainty = r.uncertainty.array().log();
  r.log_index = r.index.array().log();
  EXPECT_NEAR(r.index[0], 0.04, 1e-15);
  EXPECT_NEAR(r.index[1], 0.10, 1e-15);
  EXPECT_NEAR(r.index[2], 0.06, 1e-15);
  const Mat c = Mat::Identity(3, 3);
  const AdaptiveSample s = select_from_scores(c, r);
  EXPECT_EQ(s.candidate, 1);
  EXPECT_FALSE(s.degenerate);
  EXPECT_EQ(s.sample, c.row(1).transpose());
}

TEST(Selection, MatchesLinearScanOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const GPModel gp = small_gp(rng);
    const Mat mc = uniform_points(rng, 500, -1.5, 1.5);
    const KDEModel kde = kde_fit(mc);
    const Mat cand = uniform_points(rng, 1000, -1.5, 1.5);
    Index best = 0;
    double best_u = -1.0;
    for (Index i = 0; i < cand.rows(); ++i) {
      const double u = uncertainty_index(gp, kde, cand.row(i).transpose());
      if (u > best_u) {
        best_u = u;
        best = i;
      }
    }
    ASSERT_GT(best_u, 0.0);
    const AdaptiveSample s = select_adaptive_sample(gp, kde, cand);
    EXPECT_EQ(s.candidate, best) << "seed " << seed;
    EXPECT_NEAR(s.value, best_u, 1e-12 * best_u);
  }
}

TEST(Selection, InvariantUnderPositiveScalingOfProbabilities) {
  Rng rng(4);
  const GPModel gp = small_gp(rng);
  const Mat cand = uniform_points(rng, 400, -2, 2);
  Vec p(400);
  for (Index i = 0; i < 400; ++i) p[i] = rng.uniform(0.01, 1.0);
  const Index base = select_from_scores(cand, confidence_report(gp, p, cand)).candidate;
  for (double c : {1e-6, 0.5, 3.0, 1e6}) {
    EXPECT_EQ(select_from_scores(cand, confidence_report(gp, c * p, cand)).candidate, base) << c;
  }
}

TEST(Selection, RanksCandidatesWhereUnderflowZeroesU) {
  // Densely sampled GP: every standardized sigma is tiny and U_m underflows.
  Mat x(60, 1);
  Vec y(60);
  for (Index i = 0; i < 60; ++i) {
    x(i, 0) = static_cast<double>(i) / 59.0;
    y[i] = x(i, 0);
  }
  GPHyperparams h;
  h.length_scales = Vec::Constant(1, 3.0);
  h.signal_variance = 1.0;
  h.noise_variance = 1e-8;
  const GPModel gp = GPModel::from_parts(Normalization::fit(x, y), h, x, y);
  Mat cand(3, 1);
  cand << 0.5, 0.505, 1.02;  // the last one is just outside the data
  const ConfidenceReport r = confidence_report(gp, Vec::Ones(3), cand);
  EXPECT_EQ(r.index.maxCoeff(), 0.0);
  const AdaptiveSample s = select_from_scores(cand, r);
  EXPECT_FALSE(s.degenerate);
  EXPECT_EQ(s.candidate, 2);
}

TEST(Selection, DegenerateWhenAllProbabilitiesZero) {
  Rng rng(6);
  const GPModel gp = small_gp(rng);
  const Mat cand = uniform_points(rng, 50, -3, 3);
  const ConfidenceReport r = confidence_report(gp, Vec::Zero(50), cand);
  const AdaptiveSample s = select_from_scores(cand, r);
  EXPECT_TRUE(s.degenerate);
  EXPECT_EQ(s.candidate, argmax_first(r.uncertainty));
  EXPECT_THROW(select_from_scores(Mat(0, 2), r), InvalidInput);
}
