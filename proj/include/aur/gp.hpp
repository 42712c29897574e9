#pragma once

// Per-output Gaussian-process regression with a squared-exponential ARD
// kernel. Inputs and targets are standardized per column; hyperparameters
// live in the standardized space.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "aur/errors.hpp"
#include "aur/rng.hpp"

namespace aur {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

inline bool all_finite(const Eigen::Ref<const Mat>& m) { return m.allFinite(); }

struct GPHyperparams {
  Vec length_scales;
  double signal_variance = 1.0;
  double noise_variance = 1e-6;

  void validate() const {
    if (length_scales.size() == 0) throw InvalidInput("GPHyperparams: no length scales");
    for (Index i = 0; i < length_scales.size(); ++i) {
      if (!(std::isfinite(length_scales[i]) && length_scales[i] > 0.0)) {
        throw InvalidInput("GPHyperparams: length scale " + std::to_string(i) +
                           " must be positive and finite");
      }
    }
    if (!(std::isfinite(signal_variance) && signal_variance > 0.0)) {
      throw InvalidInput("GPHyperparams: signal variance must be positive");
    }
    if (!(std::isfinite(noise_variance) && noise_variance >= 0.0)) {
      throw InvalidInput("GPHyperparams: noise variance must be non-negative");
    }
  }

  // [log l_1..log l_d, log sf2, log sn2]
  Vec to_log() const {
    Vec p(length_scales.size() + 2);
    p.head(length_scales.size()) = length_scales.array().log();
    p[length_scales.size()] = std::log(signal_variance);
    p[length_scales.size() + 1] = std::log(noise_variance);
    return p;
  }

  static GPHyperparams from_log(const Vec& p) {
    const Index d = p.size() - 2;
    GPHyperparams h;
    h.length_scales = p.head(d).array().exp();
    h.signal_variance = std::exp(p[d]);
    h.noise_variance = std::exp(p[d + 1]);
    return h;
  }
};

/// SE-ARD covariance; adds the noise variance when `same_index` is set.
inline double kernel_eval(const Eigen::Ref<const Vec>& a, const Eigen::Ref<const Vec>& b,
                          const GPHyperparams& h, bool same_index) {
  if (a.size() != b.size() || a.size() != h.length_scales.size()) {
    throw InvalidInput("kernel_eval: dimension mismatch");
  }
  if (!a.allFinite() || !b.allFinite()) throw InvalidInput("kernel_eval: non-finite input");
  const double q = ((a - b).array() / h.length_scales.array()).square().sum();
  return h.signal_variance * std::exp(-0.5 * q) + (same_index ? h.noise_variance : 0.0);
}

/// Real-environment transitions: inputs [x, u], state deltas, rewards.
struct Dataset {
  Mat inputs;        // N x (D+F)
  Mat state_deltas;  // N x D
  Vec rewards;       // N

  Dataset() = default;
  Dataset(Index input_dim, Index state_dim)
      : inputs(0, input_dim), state_deltas(0, state_dim), rewards(0) {}

  Index size() const { return inputs.rows(); }
  Index input_dim() const { return inputs.cols(); }
  Index state_dim() const { return state_deltas.cols(); }
  Index target_count() const { return state_dim() + 1; }

  // Columns 0..D-1 select a state delta; column D selects the reward.
  Vec target(Index column) const {
    if (column < 0 || column > state_dim()) throw InvalidInput("Dataset: bad target column");
    if (column == state_dim()) return rewards;
    return state_deltas.col(column);
  }

  // Smallest scaled Euclidean distance from `x` to any stored input.
  double nearest_distance(const Vec& x, const Vec& scale) const {
    double best = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < size(); ++i) {
      const double d = ((inputs.row(i).transpose() - x).array() / scale.array()).matrix().norm();
      best = std::min(best, d);
    }
    return best;
  }

  void append(const Vec& x, const Vec& delta, double reward, const Vec& scale,
              double tolerance = 1e-9) {
    if (x.size() != input_dim() || delta.size() != state_dim()) {
      throw InvalidInput("Dataset::append: dimension mismatch");
    }
    const double d = nearest_distance(x, scale);
    if (d < tolerance) {
      std::ostringstream os;
      os << "Dataset::append: duplicate input (normalized distance " << d << ")";
      throw DuplicatePoint(os.str(), d);
    }
    const Index n = size();
    inputs.conservativeResize(n + 1, Eigen::NoChange);
    state_deltas.conservativeResize(n + 1, Eigen::NoChange);
    rewards.conservativeResize(n + 1);
    inputs.row(n) = x.transpose();
    state_deltas.row(n) = delta.transpose();
    rewards[n] = reward;
  }
};

/// Per-column standardization of inputs and of the scalar target.
struct Normalization {
  Vec input_mean;
  Vec input_scale;
  double target_mean = 0.0;
  double target_scale = 1.0;

  static Normalization identity(Index input_dim) {
    return {Vec::Zero(input_dim), Vec::Ones(input_dim), 0.0, 1.0};
  }

  static Normalization fit(const Mat& inputs, const Vec& targets) {
    constexpr double kFloor = 1e-12;
    Normalization n;
    const double rows = static_cast<double>(inputs.rows());
    n.input_mean = inputs.colwise().mean().transpose();
    n.input_scale.resize(inputs.cols());
    for (Index j = 0; j < inputs.cols(); ++j) {
      const double var = (inputs.col(j).array() - n.input_mean[j]).square().sum() / rows;
      n.input_scale[j] = var > kFloor ? std::sqrt(var) : 1.0;
    }
    n.target_mean = targets.mean();
    const double tvar = (targets.array() - n.target_mean).square().sum() / rows;
    n.target_scale = tvar > kFloor ? std::sqrt(tvar) : 1.0;
    return n;
  }

  Vec normalize_input(const Eigen::Ref<const Vec>& x) const {
    return (x - input_mean).cwiseQuotient(input_scale);
  }
  Mat normalize_inputs(const Mat& x) const {
    return (x.rowwise() - input_mean.transpose()).array().rowwise() /
           input_scale.transpose().array();
  }
  double normalize_target(double y) const { return (y - target_mean) / target_scale; }
  double denormalize_target(double z) const { return target_mean + target_scale * z; }
};

struct GPPrediction {
  double mean = 0.0;             // target units
  double std = 0.0;              // target units
  double std_normalized = 0.0;   // standardized target units
  double variance_unclamped = 0.0;  // standardized, before clamping at 0
};

namespace detail {

constexpr double kJitterStart = 1e-8;
constexpr double kJitterMax = 1e-2;

// Signal part of the kernel matrix over pre-scaled inputs (rows / length scales).
inline Mat se_gram(const Mat& scaled, double signal_variance) {
  const Index n = scaled.rows();
  const Vec sq = scaled.rowwise().squaredNorm();
  Mat d2 = (-2.0 * scaled * scaled.transpose()).colwise() + sq;
  d2.rowwise() += sq.transpose();
  Mat k = (-0.5 * d2.array().max(0.0)).exp() * signal_variance;
  for (Index i = 0; i < n; ++i) k(i, i) = signal_variance;
  return k;
}

struct Factorization {
  Eigen::LLT<Mat> llt;
  double jitter_factor = 0.0;  // relative jitter c: K_y = K + sn2 I + c mean(diag) I
};

// Cholesky of K + sn2 I; on failure, relative jitter from 1e-8 escalated x10.
inline Factorization factorize(const Mat& k_signal, double noise_variance) {
  const Index n = k_signal.rows();
  const double mean_diag = k_signal.diagonal().mean() + noise_variance;
  for (double c = 0.0; c <= kJitterMax * 1.0000001; c = c == 0.0 ? kJitterStart : c * 10.0) {
    Mat ky = k_signal;
    ky.diagonal().array() += noise_variance + c * mean_diag;
    Factorization f;
    f.llt.compute(ky);
    if (f.llt.info() == Eigen::Success && f.llt.matrixLLT().diagonal().minCoeff() > 0.0) {
      f.jitter_factor = c;
      return f;
    }
  }
  std::ostringstream os;
  os << "GP factorization failed for N=" << n << " after jitter escalation to "
     << kJitterMax << " (signal variance " << k_signal(0, 0) << ", noise variance "
     << noise_variance << ")";
  throw NumericalError(os.str());
}

struct Likelihood {
  double value;
  Vec gradient;  // w.r.t. log hyperparameters
};

// Log marginal likelihood and its gradient over standardized data.
inline Likelihood likelihood(const Mat& xn, const Vec& yn, const GPHyperparams& h) {
  const Index n = xn.rows();
  const Index d = xn.cols();
  const Mat scaled = xn.array().rowwise() / h.length_scales.transpose().array();
  const Mat k_signal = se_gram(scaled, h.signal_variance);
  const Factorization f = factorize(k_signal, h.noise_variance);
  const Vec alpha = f.llt.solve(yn);
  const double log_det_half = f.llt.matrixLLT().diagonal().array().log().sum();
  Likelihood out;
  out.value = -0.5 * yn.dot(alpha) - log_det_half -
              0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

  // dL/dtheta = 0.5 tr((alpha alpha^T - K_y^-1) dK/dtheta)
  Mat w = alpha * alpha.transpose() - f.llt.solve(Mat::Identity(n, n));
  out.gradient.resize(d + 2);
  const Mat wk = w.cwiseProduct(k_signal);
  for (Index j = 0; j < d; ++j) {
    const Vec col = scaled.col(j);
    // (x_a - x_b)^2 / l^2 over all pairs
    Mat d2 = (-2.0 * col * col.transpose()).colwise() + col.cwiseAbs2();
    d2.rowwise() += col.cwiseAbs2().transpose();
    out.gradient[j] = 0.5 * wk.cwiseProduct(d2).sum();
  }
  const double c = f.jitter_factor;
  // K_y = sf2 (R + c I) + sn2 (1 + c) I
  out.gradient[d] = 0.5 * (wk.sum() + c * h.signal_variance * w.trace());
  out.gradient[d + 1] = 0.5 * h.noise_variance * (1.0 + c) * w.trace();
  if (!std::isfinite(out.value) || !out.gradient.allFinite()) {
    throw NumericalError("GP likelihood is not finite");
  }
  return out;
}

}  // namespace detail

/// Trained GP over one target column. Immutable once constructed.
class GPModel {
 public:
  GPModel() = default;

  // Builds a model from native-unit data with given normalization and
  // hyperparameters (hyperparameters are in standardized units).
  static GPModel from_parts(Normalization norm, GPHyperparams h, Mat inputs, Vec targets) {
    h.validate();
    if (inputs.rows() == 0 || inputs.rows() != targets.size()) {
      throw InvalidInput("GPModel: empty or inconsistent training data");
    }
    if (inputs.cols() != h.length_scales.size() || norm.input_mean.size() != inputs.cols()) {
      throw InvalidInput("GPModel: input dimension mismatch");
    }
    if (!inputs.allFinite() || !targets.allFinite()) {
      throw InvalidInput("GPModel: non-finite training data");
    }
    GPModel m;
    m.norm_ = std::move(norm);
    m.hyper_ = std::move(h);
    m.inputs_ = std::move(inputs);
    m.targets_ = std::move(targets);
    m.rebuild();
    return m;
  }

  const GPHyperparams& hyperparams() const { return hyper_; }
  const Normalization& normalization() const { return norm_; }
  const Mat& training_inputs() const { return inputs_; }  // native units
  const Vec& training_targets() const { return targets_; }
  const Mat& normalized_inputs() const { return xn_; }
  const Vec& normalized_targets() const { return yn_; }
  const Vec& alpha() const { return alpha_; }
  Mat factor() const { return llt_.matrixL(); }
  double jitter_factor() const { return jitter_; }
  Index size() const { return inputs_.rows(); }
  Index input_dim() const { return inputs_.cols(); }

  double predict_mean(const Eigen::Ref<const Vec>& x) const {
    return norm_.denormalize_target(cross_covariance(x).dot(alpha_));
  }

  GPPrediction predict(const Eigen::Ref<const Vec>& x) const {
    const Vec ks = cross_covariance(x);
    GPPrediction p;
    p.mean = norm_.denormalize_target(ks.dot(alpha_));
    const Vec v = llt_.matrixL().solve(ks);
    p.variance_unclamped = hyper_.signal_variance - v.squaredNorm();
    p.std_normalized = std::sqrt(std::max(0.0, p.variance_unclamped));
    p.std = norm_.target_scale * p.std_normalized;
    return p;
  }

  // Row-wise prediction; fills native means and standardized stds.
  void predict_batch(const Mat& x, Vec& mean, Vec& std_normalized) const {
    const Mat xs = scale_inputs(norm_.normalize_inputs(x));
    const Vec sq_q = xs.rowwise().squaredNorm();
    Mat d2 = (-2.0 * xs * scaled_.transpose()).colwise() + sq_q;
    d2.rowwise() += scaled_sq_.transpose();
    const Mat ks = (-0.5 * d2.array().max(0.0)).exp() * hyper_.signal_variance;  // M x N
    mean = ((ks * alpha_).array() * norm_.target_scale + norm_.target_mean).matrix();
    const Mat v = llt_.matrixL().solve(ks.transpose());  // N x M
    std_normalized =
        (hyper_.signal_variance - v.colwise().squaredNorm().transpose().array()).max(0.0).sqrt();
  }

  double normalized_distance_to_data(const Vec& x) const {
    const Vec xn = norm_.normalize_input(x);
    return (xn_.rowwise() - xn.transpose()).rowwise().norm().minCoeff();
  }

 private:
  Mat scale_inputs(const Mat& xn) const {
    return xn.array().rowwise() / hyper_.length_scales.transpose().array();
  }

  Vec cross_covariance(const Eigen::Ref<const Vec>& x) const {
    if (x.size() != input_dim()) throw InvalidInput("GPModel::predict: dimension mismatch");
    if (!x.allFinite()) throw InvalidInput("GPModel::predict: non-finite input");
    const Vec xs = norm_.normalize_input(x).cwiseQuotient(hyper_.length_scales);
    const Vec d2 = (scaled_.rowwise() - xs.transpose()).rowwise().squaredNorm();
    return (-0.5 * d2.array()).exp() * hyper_.signal_variance;
  }

  void rebuild() {
    xn_ = norm_.normalize_inputs(inputs_);
    yn_.resize(targets_.size());
    for (Index i = 0; i < targets_.size(); ++i) yn_[i] = norm_.normalize_target(targets_[i]);
    scaled_ = scale_inputs(xn_);
    scaled_sq_ = scaled_.rowwise().squaredNorm();
    const Mat k = detail::se_gram(scaled_, hyper_.signal_variance);
    auto f = detail::factorize(k, hyper_.noise_variance);
    llt_ = std::move(f.llt);
    jitter_ = f.jitter_factor;
    alpha_ = llt_.solve(yn_);
  }

  Normalization norm_;
  GPHyperparams hyper_;
  Mat inputs_;
  Vec targets_;
  Mat xn_;
  Vec yn_;
  Mat scaled_;
  Vec scaled_sq_;
  Eigen::LLT<Mat> llt_;
  double jitter_ = 0.0;
  Vec alpha_;
};

struct LikelihoodResult {
  double value;
  Vec gradient;  // w.r.t. [log l_i..., log sf2, log sn2]
};

inline LikelihoodResult log_marginal_likelihood(const GPModel& model) {
  auto l = detail::likelihood(model.normalized_inputs(), model.normalized_targets(),
                              model.hyperparams());
  return {l.value, std::move(l.gradient)};
}

struct FitOptions {
  int restarts = 5;
  int iterations = 200;
  // Extra starting point tried before the random restarts.
  std::optional<GPHyperparams> warm_start;
};

namespace detail {

struct LogBounds {
  double lo;
  double hi;
};

inline LogBounds length_scale_bounds() { return {std::log(1e-2), std::log(1e3)}; }
inline LogBounds signal_bounds() { return {std::log(1e-4), std::log(1e4)}; }
inline LogBounds noise_bounds() { return {std::log(1e-8), std::log(1.0)}; }

inline void clamp_log_params(Vec& p) {
  const Index d = p.size() - 2;
  for (Index j = 0; j < d; ++j)
    p[j] = std::clamp(p[j], length_scale_bounds().lo, length_scale_bounds().hi);
  p[d] = std::clamp(p[d], signal_bounds().lo, signal_bounds().hi);
  p[d + 1] = std::clamp(p[d + 1], noise_bounds().lo, noise_bounds().hi);
}

// iRprop- ascent on the log-likelihood in log-hyperparameter space.
// Returns the best point visited and its likelihood.
inline std::pair<Vec, double> rprop_ascent(const Mat& xn, const Vec& yn, Vec p, int iterations) {
  constexpr double kInitStep = 0.1;
  constexpr double kMaxStep = 1.0;
  constexpr double kMinStep = 1e-6;
  clamp_log_params(p);
  Vec step = Vec::Constant(p.size(), kInitStep);
  Vec prev = Vec::Zero(p.size());
  Vec best = p;
  double best_value = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < iterations; ++it) {
    const Likelihood l = likelihood(xn, yn, GPHyperparams::from_log(p));
    if (l.value > best_value) {
      best_value = l.value;
      best = p;
    }
    for (Index j = 0; j < p.size(); ++j) {
      const double g = l.gradient[j];
      const double s = prev[j] * g;
      if (s > 0.0) {
        step[j] = std::min(step[j] * 1.2, kMaxStep);
      } else if (s < 0.0) {
        step[j] = std::max(step[j] * 0.5, kMinStep);
        prev[j] = 0.0;
        continue;
      }
      p[j] += (g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0)) * step[j];
      prev[j] = g;
    }
    clamp_log_params(p);
    if (step.maxCoeff() <= kMinStep) break;
  }
  if (!std::isfinite(best_value)) throw NumericalError("no finite likelihood visited");
  return {best, best_value};
}

inline GPHyperparams random_init(Index dim, Rng& rng) {
  auto log_uniform = [&rng](double lo, double hi) {
    return std::exp(rng.uniform(std::log(lo), std::log(hi)));
  };
  GPHyperparams h;
  h.length_scales.resize(dim);
  for (Index j = 0; j < dim; ++j) h.length_scales[j] = log_uniform(0.1, 10.0);
  h.signal_variance = log_uniform(0.1, 10.0);
  h.noise_variance = log_uniform(1e-6, 1e-2);
  return h;
}

}  // namespace detail

/// Fits a GP to native-unit inputs/targets, maximizing the marginal
/// likelihood over the warm start (if any) plus `restarts` random starts.
inline GPModel fit_targets(const Mat& inputs, const Vec& targets, const FitOptions& options,
                           Rng& rng) {
  if (inputs.rows() == 0) throw InvalidInput("fit: empty dataset");
  if (!inputs.allFinite() || !targets.allFinite()) throw InvalidInput("fit: non-finite data");
  const Normalization norm = Normalization::fit(inputs, targets);
  const Mat xn = norm.normalize_inputs(inputs);
  Vec yn(targets.size());
  for (Index i = 0; i < targets.size(); ++i) yn[i] = norm.normalize_target(targets[i]);

  std::vector<GPHyperparams> starts;
  if (options.warm_start) starts.push_back(*options.warm_start);
  for (int r = 0; r < options.restarts; ++r) starts.push_back(detail::random_init(inputs.cols(), rng));
  if (starts.empty()) throw InvalidInput("fit: no starting points (restarts = 0, no warm start)");

  std::optional<std::pair<Vec, double>> best;
  std::ostringstream failures;
  for (const auto& start : starts) {
    try {
      auto candidate = detail::rprop_ascent(xn, yn, start.to_log(), options.iterations);
      if (!best || candidate.second > best->second) best = std::move(candidate);
    } catch (const NumericalError& e) {
      failures << "\n  init l=[" << start.length_scales.transpose() << "] sf2="
               << start.signal_variance << " sn2=" << start.noise_variance << ": " << e.what();
    }
  }
  if (!best) throw FitError("fit: all restarts failed:" + failures.str());
  return GPModel::from_parts(norm, GPHyperparams::from_log(best->first), inputs, targets);
}

inline GPModel fit(const Dataset& data, Index target_column, const FitOptions& options, Rng& rng) {
  if (data.size() == 0) throw InvalidInput("fit: empty dataset");
  return fit_targets(data.inputs, data.target(target_column), options, rng);
}

struct UpdateOptions {
  bool reoptimize = false;
  FitOptions fit;
  double duplicate_tolerance = 1e-9;
};

/// Returns a new model that includes (x, y). Without re-optimization the
/// hyperparameters and normalization are kept and only the factorization is
/// rebuilt; with it, the result equals `fit_targets` on the augmented data.
inline GPModel update(const GPModel& model, const Vec& x, double y, const UpdateOptions& options,
                      Rng& rng) {
  if (!x.allFinite() || !std::isfinite(y)) throw InvalidInput("update: non-finite point");
  const double d = model.normalized_distance_to_data(x);
  if (d < options.duplicate_tolerance) {
    std::ostringstream os;
    os << "update: duplicate point rejected (normalized distance " << d << " < "
       << options.duplicate_tolerance << ")";
    throw DuplicatePoint(os.str(), d);
  }
  Mat inputs(model.size() + 1, model.input_dim());
  inputs << model.training_inputs(), x.transpose();
  Vec targets(model.size() + 1);
  targets << model.training_targets(), y;
  if (options.reoptimize) return fit_targets(inputs, targets, options.fit, rng);
  return GPModel::from_parts(model.normalization(), model.hyperparams(), std::move(inputs),
                             std::move(targets));
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr int kGPModelFormatVersion = 1;

namespace detail {

inline nlohmann::json vec_to_json(const Vec& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Vec vec_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(values.data(), static_cast<Index>(values.size()));
}

inline nlohmann::json mat_to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) rows.push_back(vec_to_json(m.row(i).transpose()));
  return rows;
}

inline Mat mat_from_json(const nlohmann::json& j, Index cols) {
  Mat m(static_cast<Index>(j.size()), cols);
  for (Index i = 0; i < m.rows(); ++i) {
    const Vec r = vec_from_json(j.at(static_cast<std::size_t>(i)));
    if (r.size() != cols) throw FormatError("matrix row has wrong width");
    m.row(i) = r.transpose();
  }
  return m;
}

}  // namespace detail

inline nlohmann::json to_json(const GPHyperparams& h) {
  return {{"length_scales", detail::vec_to_json(h.length_scales)},
          {"signal_variance", h.signal_variance},
          {"noise_variance", h.noise_variance}};
}

inline GPHyperparams hyperparams_from_json(const nlohmann::json& j) {
  GPHyperparams h;
  h.length_scales = detail::vec_from_json(j.at("length_scales"));
  h.signal_variance = j.at("signal_variance").get<double>();
  h.noise_variance = j.at("noise_variance").get<double>();
  h.validate();
  return h;
}

inline nlohmann::json to_json(const GPModel& m) {
  const auto& n = m.normalization();
  return {{"format", "aur-gp"},
          {"version", kGPModelFormatVersion},
          {"hyperparams", to_json(m.hyperparams())},
          {"normalization",
           {{"input_mean", detail::vec_to_json(n.input_mean)},
            {"input_scale", detail::vec_to_json(n.input_scale)},
            {"target_mean", n.target_mean},
            {"target_scale", n.target_scale}}},
          {"inputs", detail::mat_to_json(m.training_inputs())},
          {"targets", detail::vec_to_json(m.training_targets())}};
}

inline GPModel gp_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "aur-gp") throw FormatError("not a GP record");
    if (j.at("version").get<int>() != kGPModelFormatVersion) {
      throw FormatError("GP record version " + j.at("version").dump() + " is not supported (expected " +
                        std::to_string(kGPModelFormatVersion) + ")");
    }
    const GPHyperparams h = hyperparams_from_json(j.at("hyperparams"));
    const auto& nj = j.at("normalization");
    Normalization n;
    n.input_mean = detail::vec_from_json(nj.at("input_mean"));
    n.input_scale = detail::vec_from_json(nj.at("input_scale"));
    n.target_mean = nj.at("target_mean").get<double>();
    n.target_scale = nj.at("target_scale").get<double>();
    Mat inputs = detail::mat_from_json(j.at("inputs"), h.length_scales.size());
    Vec targets = detail::vec_from_json(j.at("targets"));
    return GPModel::from_parts(std::move(n), h, std::move(inputs), std::move(targets));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed GP record: ") + e.what());
  }
}

}  // namespace aur
