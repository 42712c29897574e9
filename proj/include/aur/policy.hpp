#pragma once

// One-hidden-layer feedforward policies. Continuous head: tanh hidden,
// tanh output scaled by u_max, Gaussian exploration in pre-tanh space.
// Discrete head: ReLU hidden, per-dimension softmax groups.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "json.hpp"

#include "aur/environments.hpp"
#include "aur/gp.hpp"
#include "aur/rng.hpp"

namespace aur {

enum class PolicyHead { kContinuous, kDiscrete };
enum class Activation { kTanh, kRelu };

inline constexpr Index kDefaultHidden = 32;

/// Dense in -> hidden -> out network; the output layer is linear.
struct Mlp {
  Mat w1;
  Vec b1;
  Mat w2;
  Vec b2;
  Activation activation = Activation::kTanh;

  Index inputs() const { return w1.cols(); }
  Index hidden() const { return w1.rows(); }
  Index outputs() const { return w2.rows(); }
  Index param_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
  static Mlp init(Index in, Index hidden, Index out, Activation act, Rng& rng) {
    Mlp m;
    m.activation = act;
    auto fill = [&rng](auto& w, double bound) {
      for (Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
    };
    m.w1.resize(hidden, in);
    m.b1.resize(hidden);
    m.w2.resize(out, hidden);
    m.b2.resize(out);
    const double b_in = 1.0 / std::sqrt(static_cast<double>(in));
    const double b_hid = 1.0 / std::sqrt(static_cast<double>(hidden));
    fill(m.w1, b_in);
    fill(m.b1, b_in);
    fill(m.w2, b_hid);
    fill(m.b2, b_hid);
    return m;
  }

  Vec flat() const {
    Vec p(param_count());
    Index o = 0;
    auto put = [&](const auto& x) {
      p.segment(o, x.size()) = Eigen::Map<const Vec>(x.data(), x.size());
      o += x.size();
    };
    put(w1);
    put(b1);
    put(w2);
    put(b2);
    return p;
  }

  void set_flat(const Eigen::Ref<const Vec>& p) {
    Index o = 0;
    auto get = [&](auto& x) {
      Eigen::Map<Vec>(x.data(), x.size()) = p.segment(o, x.size());
      o += x.size();
    };
    get(w1);
    get(b1);
    get(w2);
    get(b2);
  }

  struct Cache {
    Vec input;
    Vec pre;
    Vec hidden;
    Vec output;
  };

  Cache forward(const Vec& x) const {
    Cache c;
    c.input = x;
    c.pre = w1 * x + b1;
    c.hidden = activation == Activation::kTanh ? Vec(c.pre.array().tanh())
                                               : Vec(c.pre.cwiseMax(0.0));
    c.output = w2 * c.hidden + b2;
    return c;
  }

  // Gradient of a scalar w.r.t. the flat parameters given d(scalar)/d(output).
  Vec backward(const Cache& c, const Vec& grad_output) const {
    Vec g(param_count());
    const Vec grad_hidden = w2.transpose() * grad_output;
    Vec grad_pre(hidden());
    if (activation == Activation::kTanh) {
      grad_pre = grad_hidden.array() * (1.0 - c.hidden.array().square());
    } else {
      grad_pre = (c.pre.array() > 0.0).select(grad_hidden, 0.0);
    }
    const Mat gw1 = grad_pre * c.input.transpose();
    const Mat gw2 = grad_output * c.hidden.transpose();
    Index o = 0;
    g.segment(o, gw1.size()) = Eigen::Map<const Vec>(gw1.data(), gw1.size());
    o += gw1.size();
    g.segment(o, grad_pre.size()) = grad_pre;
    o += grad_pre.size();
    g.segment(o, gw2.size()) = Eigen::Map<const Vec>(gw2.data(), gw2.size());
    o += gw2.size();
    g.segment(o, grad_output.size()) = grad_output;
    return g;
  }
};

/// Maps states into [-1, 1] per dimension using the environment's bounds.
struct InputScaling {
  Vec center;
  Vec half_range;

  static InputScaling from_bounds(const SpaceBounds& b) {
    return {(b.lower() + b.upper()) / 2.0, (b.upper() - b.lower()) / 2.0};
  }
  Vec apply(const Vec& s) const { return (s - center).cwiseQuotient(half_range); }
};

struct PolicyParams {
  std::string env;  // environment the policy was built for
  PolicyHead head = PolicyHead::kContinuous;
  Mlp net;
  InputScaling scaling;
  Vec u_max;    // continuous
  Vec log_std;  // continuous exploration, state-independent
  std::vector<std::vector<double>> action_table;  // discrete: value of each option

  Index action_dim() const {
    return head == PolicyHead::kContinuous ? u_max.size()
                                           : static_cast<Index>(action_table.size());
  }
  Index param_count() const {
    return net.param_count() + (head == PolicyHead::kContinuous ? log_std.size() : 0);
  }

  Vec flat() const {
    Vec p(param_count());
    p.head(net.param_count()) = net.flat();
    if (head == PolicyHead::kContinuous) p.tail(log_std.size()) = log_std;
    return p;
  }
  void set_flat(const Eigen::Ref<const Vec>& p) {
    net.set_flat(p.head(net.param_count()));
    if (head == PolicyHead::kContinuous) log_std = p.tail(log_std.size());
  }

  void validate() const {
    if (!flat().allFinite()) throw InvalidInput("PolicyParams: non-finite parameters");
    if (head == PolicyHead::kContinuous) {
      if (u_max.size() != net.outputs() || (u_max.array() <= 0.0).any()) {
        throw InvalidInput("PolicyParams: u_max must be positive, one per output");
      }
    } else {
      Index total = 0;
      for (const auto& t : action_table) total += static_cast<Index>(t.size());
      if (total != net.outputs()) throw InvalidInput("PolicyParams: output units != sum a_i");
    }
  }
};

/// Evenly spaced grid with both endpoints per action dimension.
inline std::vector<std::vector<double>> discretize_action_space(const SpaceBounds& action_bounds,
                                                                int n_per_dim) {
  if (n_per_dim < 2) throw InvalidInput("discretize_action_space: need n >= 2");
  std::vector<std::vector<double>> table;
  for (const auto& d : action_bounds.dims) {
    std::vector<double> v(static_cast<std::size_t>(n_per_dim));
    for (int k = 0; k < n_per_dim; ++k) {
      v[static_cast<std::size_t>(k)] = d.lower + d.range() * k / (n_per_dim - 1);
    }
    table.push_back(std::move(v));
  }
  return table;
}

struct PolicyOptions {
  Index hidden = kDefaultHidden;
  double initial_log_std = std::log(0.5);
  // 0: use the environment's native head. >= 2: discretize a continuous
  // action space into this many options per dimension.
  int discretize = 0;
};

inline PolicyParams make_policy(const EnvSpec& spec, const PolicyOptions& opt, Rng& rng) {
  PolicyParams p;
  p.env = spec.name;
  p.scaling = InputScaling::from_bounds(spec.state_bounds());
  const SpaceBounds ab = spec.action_bounds();
  if (spec.action_type == ActionType::kDiscrete || opt.discretize >= 2) {
    p.head = PolicyHead::kDiscrete;
    p.action_table = spec.action_type == ActionType::kDiscrete
                         ? spec.action_options
                         : discretize_action_space(ab, opt.discretize);
    Index outputs = 0;
    for (const auto& t : p.action_table) outputs += static_cast<Index>(t.size());
    p.net = Mlp::init(spec.state_dim, opt.hidden, outputs, Activation::kRelu, rng);
  } else {
    p.head = PolicyHead::kContinuous;
    p.u_max = ab.upper().cwiseAbs().cwiseMax(ab.lower().cwiseAbs());
    p.log_std = Vec::Constant(spec.action_dim, opt.initial_log_std);
    p.net = Mlp::init(spec.state_dim, opt.hidden, spec.action_dim, Activation::kTanh, rng);
  }
  p.validate();
  return p;
}

/// action = u_max * tanh(net(state)).
inline Vec forward_continuous(const PolicyParams& p, const Vec& state) {
  if (p.head != PolicyHead::kContinuous) throw InvalidInput("forward_continuous: discrete head");
  const auto c = p.net.forward(p.scaling.apply(state));
  return p.u_max.cwiseProduct(Vec(c.output.array().tanh()));
}

namespace detail {

inline Vec group_softmax(const Vec& logits) {
  const Vec e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace detail

/// Per-dimension softmax probabilities.
inline std::vector<Vec> forward_discrete(const PolicyParams& p, const Vec& state) {
  if (p.head != PolicyHead::kDiscrete) throw InvalidInput("forward_discrete: continuous head");
  const auto c = p.net.forward(p.scaling.apply(state));
  std::vector<Vec> probs;
  Index o = 0;
  for (const auto& t : p.action_table) {
    const Index n = static_cast<Index>(t.size());
    probs.push_back(detail::group_softmax(c.output.segment(o, n)));
    o += n;
  }
  return probs;
}

/// Converts a raw policy action (values or category indices) into an
/// environment action.
inline Vec to_env_action(const PolicyParams& p, const Vec& raw) {
  if (p.head == PolicyHead::kContinuous) return raw;
  Vec a(raw.size());
  for (Index j = 0; j < raw.size(); ++j) {
    a[j] = p.action_table[static_cast<std::size_t>(j)][static_cast<std::size_t>(raw[j])];
  }
  return a;
}

/// Evaluation-mode action: the mean for continuous, the argmax for discrete.
inline Vec deterministic_action(const PolicyParams& p, const Vec& state) {
  if (p.head == PolicyHead::kContinuous) return forward_continuous(p, state);
  const auto probs = forward_discrete(p, state);
  Vec raw(static_cast<Index>(probs.size()));
  for (std::size_t j = 0; j < probs.size(); ++j) {
    Index k;
    probs[j].maxCoeff(&k);
    raw[static_cast<Index>(j)] = static_cast<double>(k);
  }
  return to_env_action(p, raw);
}

struct LogProbResult {
  double log_prob = 0.0;
  Vec gradient;  // w.r.t. PolicyParams::flat()
  bool clamped = false;  // continuous action had to be pulled inside (-u_max, u_max)
};

inline constexpr double kAtanhLimit = 1.0 - 1e-7;

inline LogProbResult log_prob_and_grad(const PolicyParams& p, const Vec& state, const Vec& raw) {
  const auto c = p.net.forward(p.scaling.apply(state));
  LogProbResult r;
  if (p.head == PolicyHead::kContinuous) {
    Vec grad_out(c.output.size());
    Vec grad_log_std(p.log_std.size());
    for (Index i = 0; i < raw.size(); ++i) {
      double y = raw[i] / p.u_max[i];
      if (std::abs(y) > kAtanhLimit) {
        y = std::copysign(kAtanhLimit, y);
        r.clamped = true;
      }
      const double z = std::atanh(y);
      const double sd = std::exp(p.log_std[i]);
      const double diff = (z - c.output[i]) / sd;
      r.log_prob += -0.5 * diff * diff - p.log_std[i] - 0.5 * std::log(2.0 * std::numbers::pi) -
                    std::log(p.u_max[i] * (1.0 - y * y));
      grad_out[i] = diff / sd;
      grad_log_std[i] = diff * diff - 1.0;
    }
    r.gradient.resize(p.param_count());
    r.gradient.head(p.net.param_count()) = p.net.backward(c, grad_out);
    r.gradient.tail(p.log_std.size()) = grad_log_std;
  } else {
    Vec grad_out = Vec::Zero(c.output.size());
    Index o = 0;
    for (std::size_t j = 0; j < p.action_table.size(); ++j) {
      const Index n = static_cast<Index>(p.action_table[j].size());
      const Index k = static_cast<Index>(raw[static_cast<Index>(j)]);
      if (k < 0 || k >= n) throw InvalidInput("log_prob: discrete action out of range");
      const Vec pr = detail::group_softmax(c.output.segment(o, n));
      r.log_prob += std::log(pr[k]);
      grad_out.segment(o, n) = -pr;
      grad_out[o + k] += 1.0;
      o += n;
    }
    r.gradient = p.net.backward(c, grad_out);
  }
  return r;
}

struct EntropyResult {
  double entropy = 0.0;
  Vec gradient;
};

/// Entropy of the exploration distribution (pre-tanh Gaussian for the
/// continuous head) and its gradient.
inline EntropyResult entropy_and_grad(const PolicyParams& p, const Vec& state) {
  EntropyResult r;
  r.gradient = Vec::Zero(p.param_count());
  if (p.head == PolicyHead::kContinuous) {
    r.entropy = p.log_std.sum() +
                0.5 * static_cast<double>(p.log_std.size()) * std::log(2.0 * std::numbers::pi * std::numbers::e);
    r.gradient.tail(p.log_std.size()).setOnes();
    return r;
  }
  const auto c = p.net.forward(p.scaling.apply(state));
  Vec grad_out(c.output.size());
  Index o = 0;
  for (const auto& t : p.action_table) {
    const Index n = static_cast<Index>(t.size());
    const Vec pr = detail::group_softmax(c.output.segment(o, n));
    const Vec logp = pr.array().max(1e-300).log();
    const double h = -pr.dot(logp);
    r.entropy += h;
    grad_out.segment(o, n) = -(pr.array() * (logp.array() + h)).matrix();
    o += n;
  }
  r.gradient = p.net.backward(c, grad_out);
  return r;
}

struct SampledAction {
  Vec raw;         // continuous values or category indices
  Vec env_action;
  double log_prob = 0.0;
};

inline SampledAction sample_action(const PolicyParams& p, const Vec& state, Rng& rng) {
  SampledAction s;
  if (p.head == PolicyHead::kContinuous) {
    const auto c = p.net.forward(p.scaling.apply(state));
    s.raw.resize(c.output.size());
    for (Index i = 0; i < c.output.size(); ++i) {
      const double z = c.output[i] + std::exp(p.log_std[i]) * rng.normal();
      s.raw[i] = p.u_max[i] * std::tanh(z);
    }
  } else {
    const auto probs = forward_discrete(p, state);
    s.raw.resize(static_cast<Index>(probs.size()));
    for (std::size_t j = 0; j < probs.size(); ++j) {
      const double u = rng.uniform();
      double acc = 0.0;
      Index k = probs[j].size() - 1;
      for (Index i = 0; i < probs[j].size(); ++i) {
        acc += probs[j][i];
        if (u < acc) {
          k = i;
          break;
        }
      }
      s.raw[static_cast<Index>(j)] = static_cast<double>(k);
    }
  }
  s.env_action = to_env_action(p, s.raw);
  // Same path as the update step so probability ratios start at exactly 1.
  s.log_prob = log_prob_and_grad(p, state, s.raw).log_prob;
  return s;
}

/// State-value critic: same body as the policy, scalar linear head.
struct ValueFunction {
  Mlp net;
  InputScaling scaling;

  static ValueFunction make(const EnvSpec& spec, Index hidden, Rng& rng) {
    return {Mlp::init(spec.state_dim, hidden, 1, Activation::kTanh, rng),
            InputScaling::from_bounds(spec.state_bounds())};
  }

  double value(const Vec& state) const { return net.forward(scaling.apply(state)).output[0]; }

  std::pair<double, Vec> value_and_grad(const Vec& state) const {
    const auto c = net.forward(scaling.apply(state));
    return {c.output[0], net.backward(c, Vec::Ones(1))};
  }
};

// ---------------------------------------------------------------------------
// Serialization

inline constexpr int kPolicyFormatVersion = 1;

inline nlohmann::json to_json(const Mlp& m) {
  return {{"inputs", m.inputs()},
          {"hidden", m.hidden()},
          {"outputs", m.outputs()},
          {"activation", m.activation == Activation::kTanh ? "tanh" : "relu"},
          {"params", detail::vec_to_json(m.flat())}};
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
  Mlp m;
  const Index in = j.at("inputs").get<Index>();
  const Index hid = j.at("hidden").get<Index>();
  const Index out = j.at("outputs").get<Index>();
  const std::string act = j.at("activation").get<std::string>();
  if (act != "tanh" && act != "relu") throw FormatError("unknown activation " + act);
  m.activation = act == "tanh" ? Activation::kTanh : Activation::kRelu;
  m.w1.resize(hid, in);
  m.b1.resize(hid);
  m.w2.resize(out, hid);
  m.b2.resize(out);
  const Vec p = detail::vec_from_json(j.at("params"));
  if (p.size() != m.param_count()) throw FormatError("network parameter count mismatch");
  m.set_flat(p);
  return m;
}

inline nlohmann::json scaling_to_json(const InputScaling& s) {
  return {{"center", detail::vec_to_json(s.center)},
          {"half_range", detail::vec_to_json(s.half_range)}};
}

inline InputScaling scaling_from_json(const nlohmann::json& j) {
  return {detail::vec_from_json(j.at("center")), detail::vec_from_json(j.at("half_range"))};
}

inline nlohmann::json to_json(const PolicyParams& p) {
  nlohmann::json j = {{"format", "aur-policy"},
                      {"version", kPolicyFormatVersion},
                      {"env", p.env},
                      {"head", p.head == PolicyHead::kContinuous ? "continuous" : "discrete"},
                      {"net", to_json(p.net)},
                      {"scaling", scaling_to_json(p.scaling)}};
  if (p.head == PolicyHead::kContinuous) {
    j["u_max"] = detail::vec_to_json(p.u_max);
    j["log_std"] = detail::vec_to_json(p.log_std);
  } else {
    j["action_table"] = p.action_table;
  }
  return j;
}

inline PolicyParams policy_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "aur-policy") throw FormatError("not a policy file");
    if (j.at("version").get<int>() != kPolicyFormatVersion) {
      throw FormatError("policy version " + j.at("version").dump() + " is not supported");
    }
    PolicyParams p;
    p.env = j.at("env").get<std::string>();
    const std::string head = j.at("head").get<std::string>();
    p.head = head == "continuous" ? PolicyHead::kContinuous : PolicyHead::kDiscrete;
    p.net = mlp_from_json(j.at("net"));
    p.scaling = scaling_from_json(j.at("scaling"));
    if (p.head == PolicyHead::kContinuous) {
      p.u_max = detail::vec_from_json(j.at("u_max"));
      p.log_std = detail::vec_from_json(j.at("log_std"));
    } else {
      p.action_table = j.at("action_table").get<std::vector<std::vector<double>>>();
    }
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed policy file: ") + e.what());
  }
}

inline nlohmann::json to_json(const ValueFunction& v) {
  return {{"net", to_json(v.net)}, {"scaling", scaling_to_json(v.scaling)}};
}

inline ValueFunction value_function_from_json(const nlohmann::json& j) {
  return {mlp_from_json(j.at("net")), scaling_from_json(j.at("scaling"))};
}

}  // namespace aur
