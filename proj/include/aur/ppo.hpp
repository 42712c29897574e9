#pragma once

// Proximal policy optimization against a virtual environment: rollout
// collection (AUR-D or AUR-P stepping), generalized advantage estimation,
// clipped-surrogate minibatch updates with a separate value network.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "aur/io.hpp"
#include "aur/policy.hpp"
#include "aur/virtual_env.hpp"

namespace aur {

/// First-order adaptive-moment optimizer over a flat parameter vector (minimizes).
struct Adam {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Vec m;
  Vec v;
  long t = 0;

  Adam() = default;
  Adam(Index n, double learning_rate) : lr(learning_rate), m(Vec::Zero(n)), v(Vec::Zero(n)) {}

  Vec step(const Vec& grad) {
    ++t;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    return -lr * (m / c1).cwiseQuotient(((v / c2).array().sqrt() + eps).matrix());
  }
};

struct TrainConfig {
  long total_steps = 1000000;  // virtual-interaction cap
  Index steps_per_batch = 2048;
  int epochs = 4;
  Index minibatch = 64;
  double clip = 0.2;
  double gamma = 0.99;
  double lambda = 0.95;
  double learning_rate = 3e-4;
  double entropy_coef = 0.01;
  double reward_scale = 1.0;   // applied to shaped rewards before advantage estimation
  double max_grad_norm = 0.5;  // per network; <= 0 disables clipping
  StepVariant variant = StepVariant::kDeterministic;
  std::uint64_t seed = 0;
  Index hidden = kDefaultHidden;
  double initial_log_std = std::log(0.5);
  int discretize = 0;  // >= 2: discrete head over a continuous action space
  int plateau_window = 10;   // moving-average length
  int plateau_batches = 20;  // batches the average must stay flat
  double plateau_tolerance = 0.01;
  bool early_stop = true;

  void validate() const {
    if (total_steps < 1) throw InvalidInput("TrainConfig: total_steps must be >= 1");
    if (steps_per_batch < 1) throw InvalidInput("TrainConfig: steps_per_batch must be >= 1");
    if (epochs < 1 || minibatch < 1) throw InvalidInput("TrainConfig: epochs/minibatch must be >= 1");
    if (!(clip > 0.0)) throw InvalidInput("TrainConfig: clip must be > 0");
    if (!(gamma >= 0.0 && gamma <= 1.0 && lambda >= 0.0 && lambda <= 1.0)) {
      throw InvalidInput("TrainConfig: gamma and lambda must be in [0, 1]");
    }
    if (!(learning_rate > 0.0)) throw InvalidInput("TrainConfig: learning_rate must be > 0");
    if (plateau_window < 1 || plateau_batches < 1) {
      throw InvalidInput("TrainConfig: plateau window/batches must be >= 1");
    }
  }
};

struct RolloutBatch {
  Mat states;        // n x D
  Mat raw_actions;   // n x F (values or category indices)
  Mat env_actions;   // n x F
  Vec rewards;       // shaped, unscaled
  Vec log_probs;
  Vec values;
  Vec next_values;   // V(s_{t+1}); used where an episode is cut
  std::vector<bool> episode_end;  // last step of an episode (horizon or batch cut)
  std::vector<bool> terminal;     // true end with no bootstrap
  Vec advantages;
  Vec returns;
  std::vector<double> episode_returns;  // completed (full-horizon) episodes
  std::vector<double> partial_returns;  // episodes cut by the batch boundary
  std::vector<double> reward_hull_low;  // AUR-P only: min particle reward per step
  std::vector<double> reward_hull_high;

  Index size() const { return rewards.size(); }
};

/// Single-trajectory state for either stepping variant.
class VirtualEpisode {
 public:
  VirtualEpisode(const VirtualEnv& venv, StepVariant variant) : venv_(&venv), variant_(variant) {}

  Vec reset(Rng& rng) {
    t_ = 0;
    if (variant_ == StepVariant::kDeterministic) {
      state_ = vreset(*venv_, rng);
    } else {
      particles_ = vreset_particles(*venv_, rng);
      state_ = particles_.representative;
    }
    return state_;
  }

  struct Outcome {
    Vec next_state;
    double reward = 0.0;
    double hull_low = 0.0;
    double hull_high = 0.0;
  };

  Outcome step(const Vec& action, Rng& rng) {
    Outcome o;
    if (variant_ == StepVariant::kDeterministic) {
      const VirtualStep s = vstep_deterministic(*venv_, state_, action);
      o.reward = o.hull_low = o.hull_high = s.reward;
      state_ = s.next_state;
    } else {
      ParticleStep s = vstep_probabilistic(*venv_, particles_, action, rng);
      o.reward = s.reward;
      o.hull_low = s.particle_rewards.minCoeff();
      o.hull_high = s.particle_rewards.maxCoeff();
      particles_ = std::move(s.particles);
      state_ = particles_.representative;
    }
    ++t_;
    o.next_state = state_;
    return o;
  }

  int t() const { return t_; }
  const Vec& state() const { return state_; }

 private:
  const VirtualEnv* venv_;
  StepVariant variant_;
  Vec state_;
  ParticleSet particles_;
  int t_ = 0;
};

/// Exactly n_steps virtual steps; episodes end only at the horizon. The
/// batch starts from a fresh reset.
inline RolloutBatch collect_rollouts(const VirtualEnv& venv, const PolicyParams& policy,
                                     const ValueFunction& value, StepVariant variant,
                                     Index n_steps, Rng& rng) {
  if (n_steps < 1) throw InvalidInput("collect_rollouts: n_steps must be >= 1");
  const EnvSpec& spec = venv.spec();
  RolloutBatch b;
  b.states.resize(n_steps, spec.state_dim);
  b.raw_actions.resize(n_steps, spec.action_dim);
  b.env_actions.resize(n_steps, spec.action_dim);
  b.rewards.resize(n_steps);
  b.log_probs.resize(n_steps);
  b.values.resize(n_steps);
  b.next_values = Vec::Zero(n_steps);
  b.episode_end.assign(static_cast<std::size_t>(n_steps), false);
  b.terminal.assign(static_cast<std::size_t>(n_steps), false);
  b.reward_hull_low.resize(static_cast<std::size_t>(n_steps));
  b.reward_hull_high.resize(static_cast<std::size_t>(n_steps));

  VirtualEpisode ep(venv, variant);
  Vec s = ep.reset(rng);
  double ret = 0.0;
  for (Index i = 0; i < n_steps; ++i) {
    const SampledAction a = sample_action(policy, s, rng);
    b.states.row(i) = s.transpose();
    b.raw_actions.row(i) = a.raw.transpose();
    b.env_actions.row(i) = a.env_action.transpose();
    b.log_probs[i] = a.log_prob;
    b.values[i] = value.value(s);
    const auto o = ep.step(a.env_action, rng);
    b.rewards[i] = o.reward;
    b.reward_hull_low[static_cast<std::size_t>(i)] = o.hull_low;
    b.reward_hull_high[static_cast<std::size_t>(i)] = o.hull_high;
    ret += o.reward;
    s = o.next_state;
    const bool horizon = ep.t() >= spec.horizon;
    if (horizon || i == n_steps - 1) {
      b.episode_end[static_cast<std::size_t>(i)] = true;
      b.next_values[i] = value.value(s);
      (horizon ? b.episode_returns : b.partial_returns).push_back(ret);
      ret = 0.0;
      if (horizon && i < n_steps - 1) s = ep.reset(rng);
    }
  }
  return b;
}

struct Advantages {
  Vec advantages;
  Vec returns;
};

/// GAE: delta_t = r_t + gamma V(s_{t+1}) - V(s_t); A_t = sum_k (gamma lambda)^k delta_{t+k}
/// within an episode. Cut episodes bootstrap from next_values; terminal steps do not.
inline Advantages compute_advantages(const Vec& rewards, const Vec& values, const Vec& next_values,
                                     const std::vector<bool>& episode_end,
                                     const std::vector<bool>& terminal, double gamma,
                                     double lambda) {
  const Index n = rewards.size();
  if (values.size() != n || next_values.size() != n ||
      static_cast<Index>(episode_end.size()) != n || static_cast<Index>(terminal.size()) != n) {
    throw InvalidInput("compute_advantages: length mismatch");
  }
  Advantages a;
  a.advantages.resize(n);
  double next_adv = 0.0;
  for (Index t = n - 1; t >= 0; --t) {
    const auto ut = static_cast<std::size_t>(t);
    const bool end = episode_end[ut] || t == n - 1;
    double v_next = end ? next_values[t] : values[t + 1];
    if (terminal[ut]) v_next = 0.0;
    const double delta = rewards[t] + gamma * v_next - values[t];
    if (end) next_adv = 0.0;
    next_adv = delta + gamma * lambda * next_adv;
    a.advantages[t] = next_adv;
  }
  a.returns = a.advantages + values;
  return a;
}

inline void finalize_batch(RolloutBatch& b, const TrainConfig& c) {
  const Vec r = b.rewards * c.reward_scale;
  Advantages a =
      compute_advantages(r, b.values, b.next_values, b.episode_end, b.terminal, c.gamma, c.lambda);
  b.returns = a.returns;
  const double mean = a.advantages.mean();
  const double var = (a.advantages.array() - mean).square().mean();
  b.advantages = (a.advantages.array() - mean) / (std::sqrt(var) + 1e-8);
}

/// Clipped surrogate for one sample: min(rho A, clip(rho, 1-eps, 1+eps) A).
inline double clipped_objective(double ratio, double advantage, double clip) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - clip, 1.0 + clip) * advantage);
}

struct UpdateDiagnostics {
  double policy_loss = 0.0;  // mean negative surrogate over the last epoch
  double value_loss = 0.0;
  double entropy = 0.0;
  double max_initial_ratio_deviation = 0.0;  // max |rho - 1| before any step
  double clip_fraction = 0.0;
  bool aborted = false;
  std::string message;
};

struct PpoState {
  PolicyParams policy;
  ValueFunction value;
  Adam policy_opt;
  Adam value_opt;
};

inline void clip_norm(Vec& g, double max_norm) {
  if (max_norm <= 0.0) return;
  const double n = g.norm();
  if (n > max_norm) g *= max_norm / n;
}

/// Epochs of shuffled minibatch steps on the clipped surrogate (plus entropy
/// bonus) and on the value regression. Restores the previous parameters if
/// anything non-finite appears.
inline UpdateDiagnostics ppo_update(PpoState& st, const RolloutBatch& b, const TrainConfig& c,
                                    Rng& rng) {
  UpdateDiagnostics d;
  const Index n = b.size();
  const PpoState backup = st;
  for (Index i = 0; i < n; ++i) {
    const double lp = log_prob_and_grad(st.policy, b.states.row(i).transpose(),
                                        b.raw_actions.row(i).transpose())
                          .log_prob;
    d.max_initial_ratio_deviation =
        std::max(d.max_initial_ratio_deviation, std::abs(std::exp(lp - b.log_probs[i]) - 1.0));
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  const Index pcount = st.policy.param_count();
  const Index vcount = st.value.net.param_count();
  for (int e = 0; e < c.epochs; ++e) {
    rng.shuffle(order.begin(), order.end());
    double sum_pl = 0.0, sum_vl = 0.0, sum_h = 0.0;
    Index clipped = 0;
    for (Index start = 0; start < n; start += c.minibatch) {
      const Index end = std::min(n, start + c.minibatch);
      const double m = static_cast<double>(end - start);
      Vec gp = Vec::Zero(pcount);
      Vec gv = Vec::Zero(vcount);
      for (Index k = start; k < end; ++k) {
        const Index i = order[static_cast<std::size_t>(k)];
        const Vec s = b.states.row(i).transpose();
        const LogProbResult lp = log_prob_and_grad(st.policy, s, b.raw_actions.row(i).transpose());
        const double ratio = std::exp(lp.log_prob - b.log_probs[i]);
        const double adv = b.advantages[i];
        const double surrogate = clipped_objective(ratio, adv, c.clip);
        sum_pl -= surrogate;
        // Gradient flows only through the unclipped branch when it is the minimum.
        if (ratio * adv <= std::clamp(ratio, 1.0 - c.clip, 1.0 + c.clip) * adv) {
          gp -= (ratio * adv / m) * lp.gradient;
        } else {
          ++clipped;
        }
        if (c.entropy_coef != 0.0) {
          const EntropyResult h = entropy_and_grad(st.policy, s);
          sum_h += h.entropy;
          gp -= (c.entropy_coef / m) * h.gradient;
        }
        const auto [v, vgrad] = st.value.value_and_grad(s);
        const double err = v - b.returns[i];
        sum_vl += 0.5 * err * err;
        gv += (err / m) * vgrad;
      }
      if (!gp.allFinite() || !gv.allFinite()) {
        st = backup;
        d.aborted = true;
        d.message = "non-finite gradient; update discarded";
        return d;
      }
      clip_norm(gp, c.max_grad_norm);
      clip_norm(gv, c.max_grad_norm);
      st.policy.set_flat(st.policy.flat() + st.policy_opt.step(gp));
      st.value.net.set_flat(st.value.net.flat() + st.value_opt.step(gv));
    }
    const double dn = static_cast<double>(n);
    d.policy_loss = sum_pl / dn;
    d.value_loss = sum_vl / dn;
    d.entropy = c.entropy_coef != 0.0 ? sum_h / dn : 0.0;
    d.clip_fraction = static_cast<double>(clipped) / dn;
  }
  if (!st.policy.flat().allFinite() || !st.value.net.flat().allFinite() ||
      !std::isfinite(d.policy_loss) || !std::isfinite(d.value_loss)) {
    st = backup;
    d.aborted = true;
    d.message = "non-finite loss; update discarded";
  }
  return d;
}

struct CurvePoint {
  int batch = 0;
  long steps = 0;  // cumulative virtual interactions
  double mean_return = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double max_initial_ratio_deviation = 0.0;
  bool aborted = false;
};

struct TrainResult {
  PolicyParams policy;
  ValueFunction value;
  std::vector<CurvePoint> curve;
  long total_steps = 0;
  bool stopped_early = false;
  std::vector<std::string> events;
};

inline double batch_mean_return(const RolloutBatch& b, int horizon) {
  if (!b.episode_returns.empty()) {
    return std::accumulate(b.episode_returns.begin(), b.episode_returns.end(), 0.0) /
           static_cast<double>(b.episode_returns.size());
  }
  // No full episode: extrapolate the per-step mean to the horizon.
  return b.rewards.mean() * horizon;
}

inline CsvTable learning_curve_table(const std::vector<CurvePoint>& curve) {
  CsvTable t({"batch", "steps", "mean_return", "policy_loss", "value_loss", "entropy"});
  for (const auto& p : curve) {
    RowBuilder r;
    r << p.batch << p.steps << p.mean_return << p.policy_loss << p.value_loss << p.entropy;
    t.add_row(r.take());
  }
  return t;
}

/// Plateau of the moving-average return: over the last `batches` entries the
/// moving average stayed within `tolerance` (relative) of its latest value.
inline bool return_plateaued(const std::vector<double>& returns, int window, int batches,
                             double tolerance) {
  const int need = window + batches - 1;
  if (static_cast<int>(returns.size()) < need) return false;
  std::vector<double> ma;
  const std::size_t n = returns.size();
  for (std::size_t end = n - static_cast<std::size_t>(batches) + 1; end <= n; ++end) {
    double s = 0.0;
    for (std::size_t k = end - static_cast<std::size_t>(window); k < end; ++k) s += returns[k];
    ma.push_back(s / window);
  }
  const double ref = std::abs(ma.back());
  const auto [lo, hi] = std::minmax_element(ma.begin(), ma.end());
  return (*hi - *lo) <= tolerance * std::max(ref, 1e-12);
}

inline TrainResult train_policy(const VirtualEnv& venv, const TrainConfig& config) {
  config.validate();
  const EnvSpec& spec = venv.spec();
  Rng master(config.seed);
  Rng init_rng = master.split(0);
  PolicyOptions po;
  po.hidden = config.hidden;
  po.initial_log_std = config.initial_log_std;
  po.discretize = config.discretize;
  PpoState st{make_policy(spec, po, init_rng), ValueFunction::make(spec, config.hidden, init_rng),
              Adam(), Adam()};
  st.policy_opt = Adam(st.policy.param_count(), config.learning_rate);
  st.value_opt = Adam(st.value.net.param_count(), config.learning_rate);

  TrainResult res;
  std::vector<double> returns;
  for (int batch = 0; res.total_steps < config.total_steps; ++batch) {
    const Index n = static_cast<Index>(
        std::min<long>(config.steps_per_batch, config.total_steps - res.total_steps));
    Rng rng = master.split(static_cast<std::uint64_t>(batch) + 1);
    RolloutBatch b = collect_rollouts(venv, st.policy, st.value, config.variant, n, rng);
    res.total_steps += n;
    if (res.total_steps > config.total_steps) throw std::logic_error("interaction cap exceeded");
    finalize_batch(b, config);
    const UpdateDiagnostics d = ppo_update(st, b, config, rng);
    CurvePoint p;
    p.batch = batch;
    p.steps = res.total_steps;
    p.mean_return = batch_mean_return(b, spec.horizon);
    p.policy_loss = d.policy_loss;
    p.value_loss = d.value_loss;
    p.entropy = d.entropy;
    p.max_initial_ratio_deviation = d.max_initial_ratio_deviation;
    p.aborted = d.aborted;
    if (d.aborted) res.events.push_back("batch " + std::to_string(batch) + ": " + d.message);
    res.curve.push_back(p);
    returns.push_back(p.mean_return);
    if (config.early_stop && return_plateaued(returns, config.plateau_window,
                                              config.plateau_batches, config.plateau_tolerance)) {
      res.stopped_early = true;
      break;
    }
  }
  res.policy = st.policy;
  res.value = st.value;
  return res;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"version", 1},
          {"total_steps", c.total_steps},
          {"steps_per_batch", c.steps_per_batch},
          {"epochs", c.epochs},
          {"minibatch", c.minibatch},
          {"clip", c.clip},
          {"gamma", c.gamma},
          {"lambda", c.lambda},
          {"learning_rate", c.learning_rate},
          {"entropy_coef", c.entropy_coef},
          {"reward_scale", c.reward_scale},
          {"max_grad_norm", c.max_grad_norm},
          {"variant", to_string(c.variant)},
          {"seed", c.seed},
          {"hidden", c.hidden},
          {"initial_log_std", c.initial_log_std},
          {"discretize", c.discretize},
          {"plateau_window", c.plateau_window},
          {"plateau_batches", c.plateau_batches},
          {"plateau_tolerance", c.plateau_tolerance},
          {"early_stop", c.early_stop}};
}

}  // namespace aur
