#pragma once

// Confidence index and uncertainty-index acquisition over a candidate pool.
// All sigmas here are standardized predictive stds (see GPModel).

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "aur/design.hpp"
#include "aur/gp.hpp"

namespace aur {

/// c_m = Phi(1/sigma); sigma = 0 maps to 1.
inline double model_certainty(double std_normalized) {
  if (!(std_normalized >= 0.0)) throw InvalidInput("model_certainty: std must be >= 0");
  if (std_normalized == 0.0) return 1.0;
  return 0.5 * std::erfc(-1.0 / (std_normalized * std::numbers::sqrt2));
}

/// U_m = 1 - Phi(1/sigma), computed directly so tiny values keep precision.
inline double model_uncertainty(double std_normalized) {
  if (!(std_normalized >= 0.0)) throw InvalidInput("model_uncertainty: std must be >= 0");
  if (std_normalized == 0.0) return 0.0;
  return 0.5 * std::erfc(1.0 / (std_normalized * std::numbers::sqrt2));
}

/// log U_m, finite wherever sigma > 0. Past z = 1/sigma ~ 37 the direct
/// form underflows, so the tail uses log phi(z) + log of the Mills ratio.
inline double log_model_uncertainty(double std_normalized) {
  if (!(std_normalized >= 0.0)) throw InvalidInput("log_model_uncertainty: std must be >= 0");
  if (std_normalized == 0.0) return -std::numeric_limits<double>::infinity();
  const double z = 1.0 / std_normalized;
  if (z < 8.0) return std::log(model_uncertainty(std_normalized));
  // Mills ratio R(z) = 1 / (z + 1 / (z + 2 / (z + 3 / ...))), evaluated backwards.
  double t = z;
  for (int k = 60; k >= 1; --k) t = z + k / t;
  return -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(t);
}

inline Vec predictive_stds(const GPModel& gp, const Mat& samples) {
  Vec mean, sd;
  gp.predict_batch(samples, mean, sd);
  return sd;
}

inline double confidence_index_from_stds(const Vec& stds) {
  if (stds.size() == 0) throw InvalidInput("confidence_index: no samples");
  double sum = 0.0;
  for (Index i = 0; i < stds.size(); ++i) sum += model_certainty(stds[i]);
  return sum / static_cast<double>(stds.size());
}

inline double confidence_index(const GPModel& gp, const Mat& samples) {
  if (samples.rows() == 0) throw InvalidInput("confidence_index: no samples");
  return confidence_index_from_stds(predictive_stds(gp, samples));
}

inline double uncertainty_index(const GPModel& gp, const KDEModel& kde,
                                const Eigen::Ref<const Vec>& sample) {
  return model_uncertainty(gp.predict(sample).std_normalized) * kde_eval(kde, sample);
}

/// Per-sample decomposition of the acquisition for one GP.
struct ConfidenceReport {
  double confidence_index = 0.0;
  Vec certainty;        // c_m
  Vec uncertainty;      // U_m
  Vec input_probability;  // P_i
  Vec index;            // U = U_m * P_i
  Vec log_uncertainty;  // log U_m
  Vec log_index;        // log U; ranks candidates even where U underflows
};

inline ConfidenceReport confidence_report(const GPModel& gp, const Vec& input_probability,
                                          const Mat& samples) {
  if (input_probability.size() != samples.rows()) {
    throw InvalidInput("confidence_report: probability/sample count mismatch");
  }
  const Vec sd = predictive_stds(gp, samples);
  ConfidenceReport r;
  const Index n = samples.rows();
  r.certainty.resize(n);
  r.uncertainty.resize(n);
  r.log_uncertainty.resize(n);
  r.log_index.resize(n);
  for (Index i = 0; i < n; ++i) {
    r.certainty[i] = model_certainty(sd[i]);
    r.uncertainty[i] = model_uncertainty(sd[i]);
    r.log_uncertainty[i] = log_model_uncertainty(sd[i]);
    r.log_index[i] = input_probability[i] > 0.0
                         ? r.log_uncertainty[i] + std::log(input_probability[i])
                         : -std::numeric_limits<double>::infinity();
  }
  r.confidence_index = r.certainty.mean();
  r.input_probability = input_probability;
  r.index = r.uncertainty.cwiseProduct(input_probability);
  return r;
}

struct AdaptiveSample {
  Index candidate = 0;
  Vec sample;
  double value = 0.0;
  double log_value = 0.0;
  bool degenerate = false;  // every P_i was zero; fell back to argmax U_m
};

/// argmax over a score vector, lowest index on ties.
inline Index argmax_first(const Vec& scores) {
  Index best = 0;
  for (Index i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

// Scores are log U and log U_m per candidate (the latter for the degenerate fallback).
inline AdaptiveSample select_from_scores(const Mat& candidates, const ConfidenceReport& r) {
  if (candidates.rows() == 0) throw InvalidInput("select_adaptive_sample: no candidates");
  AdaptiveSample s;
  if (std::isfinite(r.log_index.maxCoeff())) {
    s.candidate = argmax_first(r.log_index);
  } else {
    s.degenerate = true;
    s.candidate = argmax_first(r.log_uncertainty);
  }
  s.sample = candidates.row(s.candidate).transpose();
  s.value = r.index[s.candidate];
  s.log_value = r.log_index[s.candidate];
  return s;
}

inline AdaptiveSample select_adaptive_sample(const GPModel& gp, const KDEModel& kde,
                                             const Mat& candidates) {
  if (candidates.rows() == 0) throw InvalidInput("select_adaptive_sample: no candidates");
  const ConfidenceReport r = confidence_report(gp, kde_eval_batch(kde, candidates), candidates);
  return select_from_scores(candidates, r);
}

}  // namespace aur
