#pragma once

// Learned step function: D state-delta GPs plus one reward GP. The
// deterministic variant propagates a single state through the GP means; the
// probabilistic variant propagates a particle cloud by sampling each GP's
// predictive normal and combines particle rewards with inverse-variance
// weights.

#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"

#include "aur/environments.hpp"
#include "aur/gp.hpp"
#include "aur/rng.hpp"

namespace aur {

enum class StepVariant { kDeterministic, kProbabilistic };

inline std::string to_string(StepVariant v) {
  return v == StepVariant::kDeterministic ? "aur-d" : "aur-p";
}

inline StepVariant step_variant_from_string(const std::string& s) {
  if (s == "aur-d") return StepVariant::kDeterministic;
  if (s == "aur-p") return StepVariant::kProbabilistic;
  throw InvalidInput("unknown variant '" + s + "' (expected aur-d or aur-p)");
}

struct VirtualEnvOptions {
  double pessimism = 3.0;    // k in R = R_mu - k R_sigma
  Index particles = 1000;
  double reset_spread = 0.01;  // particle sd as a fraction of each state range
  bool propagate_noise = true;  // sample GP predictive noise for particles
};

struct BuildInfo {
  std::string status = "unknown";  // converged | budget_exhausted
  int real_evaluations = 0;
  int iterations = 0;
  std::vector<double> final_ci;
};

/// R = mu - k sigma.
inline double shape_reward(double mean, double std, double k) {
  if (!(std >= 0.0)) throw InvalidInput("shape_reward: std must be >= 0");
  return mean - k * std;
}

class VirtualEnv {
 public:
  VirtualEnv(std::string env_name, std::vector<GPModel> state_gps, GPModel reward_gp,
             VirtualEnvOptions options = {}, BuildInfo info = {}, double reset_scale = 1.0)
      : env_name_(std::move(env_name)),
        reset_scale_(reset_scale),
        spec_(make_environment(env_name_, reset_scale).spec()),
        state_gps_(std::move(state_gps)),
        reward_gp_(std::move(reward_gp)),
        options_(options),
        info_(std::move(info)) {
    if (static_cast<Index>(state_gps_.size()) != spec_.state_dim) {
      throw InvalidInput("VirtualEnv: need one GP per state dimension");
    }
    for (const auto& gp : state_gps_) {
      if (gp.input_dim() != spec_.input_dim()) throw InvalidInput("VirtualEnv: GP input dim mismatch");
    }
    if (reward_gp_.input_dim() != spec_.input_dim()) {
      throw InvalidInput("VirtualEnv: reward GP input dim mismatch");
    }
  }

  const std::string& env_name() const { return env_name_; }
  double reset_scale() const { return reset_scale_; }
  const EnvSpec& spec() const { return spec_; }
  const std::vector<GPModel>& state_gps() const { return state_gps_; }
  const GPModel& reward_gp() const { return reward_gp_; }
  const VirtualEnvOptions& options() const { return options_; }
  VirtualEnvOptions& options() { return options_; }
  const BuildInfo& info() const { return info_; }
  double pessimism() const { return options_.pessimism; }

  // Draw from the real environment's reset distribution.
  Vec sample_reset(Rng& rng) const {
    Environment e = make_environment(env_name_, reset_scale_);
    return e.reset(rng);
  }

 private:
  std::string env_name_;
  double reset_scale_;
  EnvSpec spec_;
  std::vector<GPModel> state_gps_;
  GPModel reward_gp_;
  VirtualEnvOptions options_;
  BuildInfo info_;
};

struct VirtualStep {
  Vec next_state;
  double reward = 0.0;       // shaped
  double reward_mean = 0.0;
  double reward_std = 0.0;
};

inline Vec join(const Vec& state, const Vec& action) {
  Vec x(state.size() + action.size());
  x << state, action;
  return x;
}

/// Mean next state for the input row x = [state, action].
inline Vec predict_next_state(const VirtualEnv& venv, const Vec& x) {
  const auto& spec = venv.spec();
  Vec next = x.head(spec.state_dim);
  for (Index i = 0; i < spec.state_dim; ++i) {
    next[i] += venv.state_gps()[static_cast<std::size_t>(i)].predict_mean(x);
  }
  return spec.canonical_state(next);
}

/// Single-state step through the GP means; reward from the reward GP at the
/// current (state, action), shifted down by k standard deviations.
inline VirtualStep vstep_deterministic(const VirtualEnv& venv, const Vec& state, const Vec& action) {
  if (!state.allFinite() || !action.allFinite()) {
    throw InvalidInput("vstep_deterministic: non-finite state or action");
  }
  const Vec x = join(state, venv.spec().canonical_action(action));
  VirtualStep s;
  s.next_state = predict_next_state(venv, x);
  const GPPrediction r = venv.reward_gp().predict(x);
  s.reward_mean = r.mean;
  s.reward_std = r.std;
  s.reward = shape_reward(r.mean, r.std, venv.pessimism());
  return s;
}

/// Particle cloud; `representative` is what the agent observes.
struct ParticleSet {
  Mat particles;  // P x D
  Vec representative;

  Index size() const { return particles.rows(); }
  Vec mean() const { return particles.colwise().mean().transpose(); }
};

/// AUR-P reset: particles = reset state + N(0, sigma0^2) per dimension; the
/// observed state at t = 0 is the reset state itself.
inline ParticleSet vreset_particles(const VirtualEnv& venv, Rng& rng) {
  const auto& spec = venv.spec();
  const Vec reset = venv.sample_reset(rng);
  const Vec sd = venv.options().reset_spread * spec.state_bounds().ranges();
  ParticleSet ps;
  ps.particles.resize(venv.options().particles, spec.state_dim);
  for (Index j = 0; j < ps.particles.rows(); ++j) {
    Vec p = reset;
    for (Index i = 0; i < spec.state_dim; ++i) p[i] += sd[i] * rng.normal();
    ps.particles.row(j) = spec.canonical_state(p).transpose();
  }
  ps.representative = reset;
  return ps;
}

inline Vec vreset(const VirtualEnv& venv, Rng& rng) { return venv.sample_reset(rng); }

struct ParticleStep {
  ParticleSet particles;
  double reward = 0.0;
  Vec particle_rewards;
  Vec weights;
};

/// Propagates every particle by sampling each state GP's predictive normal,
/// takes the particle mean as the representative state, and combines the
/// shaped particle rewards with weights 1 / (total reward predictive variance).
inline ParticleStep vstep_probabilistic(const VirtualEnv& venv, const ParticleSet& ps,
                                        const Vec& action, Rng& rng) {
  if (ps.size() == 0) throw InvalidInput("vstep_probabilistic: empty particle set");
  const auto& spec = venv.spec();
  const Index n = ps.size();
  const Vec a = spec.canonical_action(action);
  Mat x(n, spec.input_dim());
  x.leftCols(spec.state_dim) = ps.particles;
  x.rightCols(spec.action_dim) = a.transpose().replicate(n, 1);

  ParticleStep out;
  out.particles.particles = ps.particles;
  Vec mean, sd;
  for (Index i = 0; i < spec.state_dim; ++i) {
    const GPModel& gp = venv.state_gps()[static_cast<std::size_t>(i)];
    gp.predict_batch(x, mean, sd);
    const double scale = gp.normalization().target_scale;
    for (Index j = 0; j < n; ++j) {
      const double noise = venv.options().propagate_noise ? rng.normal() : 0.0;
      out.particles.particles(j, i) += mean[j] + scale * sd[j] * noise;
    }
  }
  for (Index j = 0; j < n; ++j) {
    out.particles.particles.row(j) =
        spec.canonical_state(out.particles.particles.row(j).transpose()).transpose();
  }
  out.particles.representative = out.particles.mean();

  venv.reward_gp().predict_batch(x, mean, sd);
  const double rscale = venv.reward_gp().normalization().target_scale;
  const double noise = venv.reward_gp().hyperparams().noise_variance;
  out.particle_rewards.resize(n);
  out.weights.resize(n);
  bool all_zero = true;
  for (Index j = 0; j < n; ++j) {
    const double std = rscale * sd[j];
    out.particle_rewards[j] = shape_reward(mean[j], std, venv.pessimism());
    const double var = rscale * rscale * (sd[j] * sd[j] + noise);  // total: latent + noise
    if (var > 0.0) all_zero = false;
    out.weights[j] = 1.0 / std::max(var, 1e-12);
  }
  if (all_zero) out.weights.setOnes();
  out.reward = out.weights.dot(out.particle_rewards) / out.weights.sum();
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr int kVirtualEnvFormatVersion = 1;

inline nlohmann::json to_json(const VirtualEnv& v) {
  nlohmann::json gps = nlohmann::json::array();
  for (const auto& g : v.state_gps()) gps.push_back(to_json(g));
  return {{"format", "aur-venv"},
          {"version", kVirtualEnvFormatVersion},
          {"env", v.env_name()},
          {"reset_scale", v.reset_scale()},
          {"options",
           {{"pessimism", v.options().pessimism},
            {"particles", v.options().particles},
            {"reset_spread", v.options().reset_spread},
            {"propagate_noise", v.options().propagate_noise}}},
          {"build",
           {{"status", v.info().status},
            {"real_evaluations", v.info().real_evaluations},
            {"iterations", v.info().iterations},
            {"final_ci", v.info().final_ci}}},
          {"state_gps", gps},
          {"reward_gp", to_json(v.reward_gp())}};
}

inline VirtualEnv virtual_env_from_json(const nlohmann::json& j) {
  try {
    if (!j.contains("format") || j.at("format") != "aur-venv") {
      throw FormatError("not a virtual environment file");
    }
    const int version = j.at("version").get<int>();
    if (version != kVirtualEnvFormatVersion) {
      throw FormatError("virtual environment version " + std::to_string(version) +
                        " is not supported (expected " +
                        std::to_string(kVirtualEnvFormatVersion) + ")");
    }
    std::vector<GPModel> gps;
    for (const auto& g : j.at("state_gps")) gps.push_back(gp_from_json(g));
    VirtualEnvOptions o;
    const auto& oj = j.at("options");
    o.pessimism = oj.at("pessimism").get<double>();
    o.particles = oj.at("particles").get<Index>();
    o.reset_spread = oj.at("reset_spread").get<double>();
    o.propagate_noise = oj.at("propagate_noise").get<bool>();
    BuildInfo info;
    const auto& bj = j.at("build");
    info.status = bj.at("status").get<std::string>();
    info.real_evaluations = bj.at("real_evaluations").get<int>();
    info.iterations = bj.at("iterations").get<int>();
    info.final_ci = bj.at("final_ci").get<std::vector<double>>();
    return VirtualEnv(j.at("env").get<std::string>(), std::move(gps),
                      gp_from_json(j.at("reward_gp")), o, info, j.at("reset_scale").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed virtual environment file: ") + e.what());
  }
}

}  // namespace aur
