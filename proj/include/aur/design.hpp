#pragma once

// Latin hypercube designs over a bounded box and product-Gaussian kernel
// density estimates over sample sets.

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "aur/gp.hpp"
#include "aur/rng.hpp"

namespace aur {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double normal_quantile(double p) {
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

enum class DimDistribution { kUniform, kTruncatedNormal };

struct DimBounds {
  double lower = 0.0;
  double upper = 1.0;
  DimDistribution distribution = DimDistribution::kUniform;
  double mean = 0.0;   // truncated normal only
  double stddev = 1.0;

  double range() const { return upper - lower; }

  // Inverse CDF of the (possibly truncated) marginal on [lower, upper].
  double quantile(double p) const {
    if (distribution == DimDistribution::kUniform) return lower + p * range();
    const double a = normal_cdf((lower - mean) / stddev);
    const double b = normal_cdf((upper - mean) / stddev);
    const double x = mean + stddev * normal_quantile(a + p * (b - a));
    return std::clamp(x, lower, upper);
  }

  double cdf(double x) const {
    if (x <= lower) return 0.0;
    if (x >= upper) return 1.0;
    if (distribution == DimDistribution::kUniform) return (x - lower) / range();
    const double a = normal_cdf((lower - mean) / stddev);
    const double b = normal_cdf((upper - mean) / stddev);
    return (normal_cdf((x - mean) / stddev) - a) / (b - a);
  }
};

/// Box over the combined [state, action] space.
struct SpaceBounds {
  std::vector<DimBounds> dims;

  SpaceBounds() = default;
  explicit SpaceBounds(std::vector<DimBounds> d) : dims(std::move(d)) { validate(); }

  static SpaceBounds uniform(const Vec& lower, const Vec& upper) {
    std::vector<DimBounds> d;
    for (Index i = 0; i < lower.size(); ++i) d.push_back({lower[i], upper[i]});
    return SpaceBounds(std::move(d));
  }

  Index size() const { return static_cast<Index>(dims.size()); }

  void validate() const {
    for (std::size_t i = 0; i < dims.size(); ++i) {
      const auto& d = dims[i];
      if (!(std::isfinite(d.lower) && std::isfinite(d.upper) && d.lower < d.upper)) {
        throw InvalidInput("SpaceBounds: dimension " + std::to_string(i) +
                           " needs finite lower < upper");
      }
      if (d.distribution == DimDistribution::kTruncatedNormal &&
          !(std::isfinite(d.mean) && d.stddev > 0.0)) {
        throw InvalidInput("SpaceBounds: bad truncated-normal parameters");
      }
    }
  }

  Vec lower() const {
    Vec v(size());
    for (Index i = 0; i < size(); ++i) v[i] = dims[static_cast<std::size_t>(i)].lower;
    return v;
  }
  Vec upper() const {
    Vec v(size());
    for (Index i = 0; i < size(); ++i) v[i] = dims[static_cast<std::size_t>(i)].upper;
    return v;
  }
  Vec ranges() const { return upper() - lower(); }

  Vec clip(const Vec& x) const { return x.cwiseMax(lower()).cwiseMin(upper()); }

  SpaceBounds slice(Index start, Index count) const {
    return SpaceBounds(std::vector<DimBounds>(dims.begin() + start, dims.begin() + start + count));
  }
};

/// n-point Latin hypercube: in every dimension each of the n equal-probability
/// strata holds exactly one point, placed uniformly (in probability) within it.
inline Mat lhs_sample(const SpaceBounds& bounds, Index n, Rng& rng) {
  if (n < 1) throw InvalidInput("lhs_sample: n must be >= 1");
  bounds.validate();
  Mat out(n, bounds.size());
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index j = 0; j < bounds.size(); ++j) {
    std::iota(perm.begin(), perm.end(), Index{0});
    rng.shuffle(perm.begin(), perm.end());
    const auto& dim = bounds.dims[static_cast<std::size_t>(j)];
    for (Index i = 0; i < n; ++i) {
      const double p = (static_cast<double>(perm[static_cast<std::size_t>(i)]) + rng.uniform()) /
                       static_cast<double>(n);
      out(i, j) = dim.quantile(p);
    }
  }
  return out;
}

/// Product-Gaussian KDE with per-dimension bandwidths.
struct KDEModel {
  Mat support;   // M x d
  Vec bandwidths;
  std::vector<std::string> warnings;
};

/// Silverman bandwidths h_i = 1.06 sd_i M^(-1/5), floored at 1e-3 of the
/// dimension's range (bound range when given, else the sample range, else 1).
inline KDEModel kde_fit(const Mat& samples, const std::optional<Vec>& bound_ranges = std::nullopt) {
  if (samples.rows() < 2) throw InvalidInput("kde_fit: need at least 2 samples");
  if (!samples.allFinite()) throw InvalidInput("kde_fit: non-finite sample");
  if (bound_ranges && bound_ranges->size() != samples.cols()) {
    throw InvalidInput("kde_fit: bound range dimension mismatch");
  }
  KDEModel kde;
  kde.support = samples;
  kde.bandwidths.resize(samples.cols());
  const double m = static_cast<double>(samples.rows());
  const double factor = 1.06 * std::pow(m, -0.2);
  for (Index j = 0; j < samples.cols(); ++j) {
    const auto col = samples.col(j).array();
    const double mean = col.mean();
    const double sd = std::sqrt((col - mean).square().sum() / (m - 1.0));
    double range = bound_ranges ? (*bound_ranges)[j] : col.maxCoeff() - col.minCoeff();
    if (!(range > 0.0)) range = 1.0;
    const double floor = 1e-3 * range;
    const double h = factor * sd;
    if (h < floor) {
      kde.warnings.push_back("dimension " + std::to_string(j) + ": bandwidth " +
                             std::to_string(h) + " floored at " + std::to_string(floor));
      kde.bandwidths[j] = floor;
    } else {
      kde.bandwidths[j] = h;
    }
  }
  return kde;
}

inline double kde_eval(const KDEModel& kde, const Eigen::Ref<const Vec>& x) {
  if (x.size() != kde.support.cols()) throw InvalidInput("kde_eval: dimension mismatch");
  if (!x.allFinite()) throw InvalidInput("kde_eval: non-finite point");
  const Vec inv_h = kde.bandwidths.cwiseInverse();
  const double log_norm = -static_cast<double>(x.size()) * 0.5 * std::log(2.0 * std::numbers::pi) +
                          inv_h.array().log().sum();
  const Eigen::ArrayXd q =
      ((kde.support.rowwise() - x.transpose()).array().rowwise() * inv_h.transpose().array())
          .square()
          .rowwise()
          .sum();
  return std::exp(log_norm) * (-0.5 * q).exp().mean();
}

inline Vec kde_eval_batch(const KDEModel& kde, const Mat& points) {
  Vec out(points.rows());
  for (Index i = 0; i < points.rows(); ++i) out[i] = kde_eval(kde, points.row(i).transpose());
  return out;
}

}  // namespace aur
