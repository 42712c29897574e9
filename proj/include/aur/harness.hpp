#pragma once

// End-to-end experiments: build, train, evaluate in the real (possibly
// perturbed) environment, robustness under parameter bias, and the
// adaptive-vs-LHS ablation. Every summary number is recomputable from the
// per-episode CSV rows written alongside it.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "aur/env_builder.hpp"
#include "aur/io.hpp"
#include "aur/ppo.hpp"
#include "aur/stats.hpp"

namespace aur {

// ---------------------------------------------------------------------------
// Configuration

namespace detail {

/// Reads keys from a JSON object and rejects any key nobody asked for.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw FormatError(where_ + ": expected an object");
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where_ + "." + key + ": " + e.what());
    }
  }

  std::optional<nlohmann::json> child(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw FormatError(where_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace detail

struct EvalConfig {
  int runs = 1;
  int trials = 100;
  double reset_scale = 1.0;
};

struct RobustnessConfig {
  bool enabled = true;
  int envs = 5;
  double perturbation_scale = 0.1;
  int trials = 100;  // cart-pole episodes per perturbed environment
};

struct AblationConfig {
  bool enabled = false;
  int seeds = 5;
  int budget = 125;
  int initial = 40;
  int episodes = 5;  // real episodes per trained arm; their inputs are where variance is measured
  double alpha = 0.05;
};

/// Checked after run-all; any configured bound that fails makes the run fail.
struct Assertions {
  std::optional<int> max_real_evaluations;
  std::optional<double> min_success_rate;
  std::optional<int> min_robust_successes;
  std::optional<double> max_ablation_p_value;
};

struct ExperimentConfig {
  int version = 1;
  std::string env = "pendulum";
  std::uint64_t seed = 0;
  std::string output_dir = "aur_out";
  BuildConfig build;
  TrainConfig train;
  EvalConfig evaluation;
  RobustnessConfig robustness;
  AblationConfig ablation;
  Assertions assertions;

  void validate() const {
    const EnvSpec spec = make_environment(env).spec();
    BuildConfig b = build;
    b.env = env;
    b.validate(spec);
    train.validate();
    if (evaluation.runs < 1 || evaluation.trials < 1) {
      throw InvalidInput("evaluation: runs and trials must be >= 1");
    }
    if (!(evaluation.reset_scale > 0.0)) throw InvalidInput("evaluation: reset_scale must be > 0");
    if (robustness.envs < 1 || robustness.trials < 1 || robustness.perturbation_scale < 0.0) {
      throw InvalidInput("robustness: envs/trials must be >= 1 and scale >= 0");
    }
    if (ablation.enabled &&
        (ablation.seeds < 1 || ablation.episodes < 1 || ablation.budget < ablation.initial)) {
      throw InvalidInput("ablation: seeds, episodes >= 1 and budget >= initial required");
    }
  }
};

inline constexpr int kExperimentConfigVersion = 1;

inline BuildConfig build_config_from_json(const nlohmann::json& j, BuildConfig c = {}) {
  detail::StrictObject o(j, "build");
  std::string mode = to_string(c.mc_mode);
  o.read("target_ci", c.target_ci);
  o.read("initial_samples", c.initial_samples);
  o.read("mc_samples", c.mc_samples);
  o.read("budget", c.budget);
  o.read("refit_period", c.refit_period);
  o.read("mc_mode", mode);
  o.read("fixed_budget", c.fixed_budget);
  o.read("fit_restarts", c.fit.restarts);
  o.read("fit_iterations", c.fit.iterations);
  o.read("refit_restarts", c.refit_restarts);
  o.read("refit_iterations", c.refit_iterations);
  o.read("pessimism", c.venv.pessimism);
  o.read("particles", c.venv.particles);
  o.read("reset_spread", c.venv.reset_spread);
  o.finish();
  c.mc_mode = mc_mode_from_string(mode);
  return c;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  detail::StrictObject o(j, "train");
  std::string variant = to_string(c.variant);
  int version = 1;
  o.read("version", version);
  if (version != 1) throw FormatError("train: unsupported version " + std::to_string(version));
  o.read("total_steps", c.total_steps);
  o.read("steps_per_batch", c.steps_per_batch);
  o.read("epochs", c.epochs);
  o.read("minibatch", c.minibatch);
  o.read("clip", c.clip);
  o.read("gamma", c.gamma);
  o.read("lambda", c.lambda);
  o.read("learning_rate", c.learning_rate);
  o.read("entropy_coef", c.entropy_coef);
  o.read("reward_scale", c.reward_scale);
  o.read("max_grad_norm", c.max_grad_norm);
  o.read("variant", variant);
  o.read("seed", c.seed);
  o.read("hidden", c.hidden);
  o.read("initial_log_std", c.initial_log_std);
  o.read("discretize", c.discretize);
  o.read("plateau_window", c.plateau_window);
  o.read("plateau_batches", c.plateau_batches);
  o.read("plateau_tolerance", c.plateau_tolerance);
  o.read("early_stop", c.early_stop);
  o.finish();
  c.variant = step_variant_from_string(variant);
  return c;
}

/// PPO settings tuned per benchmark; the generic defaults are kept for cart-pole.
inline TrainConfig default_train_config(const std::string& env) {
  TrainConfig c;
  if (env == "pendulum") {
    c.gamma = 0.95;
    c.epochs = 10;
    c.entropy_coef = 0.0;
    c.learning_rate = 1e-3;
    c.reward_scale = 0.1;
  }
  return c;
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  detail::StrictObject o(j, "config");
  ExperimentConfig c;
  o.read("version", c.version);
  if (c.version != kExperimentConfigVersion) {
    throw FormatError("config version " + std::to_string(c.version) + " is not supported (expected " +
                      std::to_string(kExperimentConfigVersion) + ")");
  }
  o.read("env", c.env);
  o.read("seed", c.seed);
  o.read("output_dir", c.output_dir);
  c.train = default_train_config(c.env);
  if (auto b = o.child("build")) c.build = build_config_from_json(*b);
  if (auto t = o.child("train")) c.train = train_config_from_json(*t, c.train);
  if (auto e = o.child("evaluation")) {
    detail::StrictObject eo(*e, "evaluation");
    eo.read("runs", c.evaluation.runs);
    eo.read("trials", c.evaluation.trials);
    eo.read("reset_scale", c.evaluation.reset_scale);
    eo.finish();
  }
  if (auto r = o.child("robustness")) {
    detail::StrictObject ro(*r, "robustness");
    ro.read("enabled", c.robustness.enabled);
    ro.read("envs", c.robustness.envs);
    ro.read("perturbation_scale", c.robustness.perturbation_scale);
    ro.read("trials", c.robustness.trials);
    ro.finish();
  }
  if (auto a = o.child("ablation")) {
    detail::StrictObject ao(*a, "ablation");
    ao.read("enabled", c.ablation.enabled);
    ao.read("seeds", c.ablation.seeds);
    ao.read("budget", c.ablation.budget);
    ao.read("initial", c.ablation.initial);
    ao.read("episodes", c.ablation.episodes);
    ao.read("alpha", c.ablation.alpha);
    ao.finish();
  }
  if (auto s = o.child("assertions")) {
    detail::StrictObject so(*s, "assertions");
    auto opt = [&so](const std::string& key, auto& field) {
      using T = typename std::remove_reference_t<decltype(field)>::value_type;
      T v{};
      bool present = false;
      auto probe = so.child(key);
      if (probe) {
        try {
          v = probe->get<T>();
        } catch (const nlohmann::json::exception& e) {
          throw FormatError("assertions." + key + ": " + e.what());
        }
        present = true;
      }
      if (present) field = v;
    };
    opt("max_real_evaluations", c.assertions.max_real_evaluations);
    opt("min_success_rate", c.assertions.min_success_rate);
    opt("min_robust_successes", c.assertions.min_robust_successes);
    opt("max_ablation_p_value", c.assertions.max_ablation_p_value);
    so.finish();
  }
  o.finish();
  c.build.env = c.env;
  c.build.seed = c.seed;
  c.train.seed = c.seed;
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Upright for pendulum: |theta| < 0.2 rad and |theta_dot| < 1 rad/s.
inline bool pendulum_upright(const Vec& obs) {
  return std::abs(std::atan2(obs[1], obs[0])) < 0.2 && std::abs(obs[2]) < 1.0;
}

inline constexpr int kPendulumSettleSteps = 20;
inline constexpr double kCartPoleSolveLength = 195.0;

struct EpisodeRecord {
  int run = 0;
  int episode = 0;
  double ret = 0.0;
  int length = 0;
  bool converged = false;  // pendulum: upright for the final 20 steps; cart-pole: full horizon
  int settle_step = -1;    // pendulum: first step of the final upright stretch
};

struct EvalReport {
  std::string env;
  std::vector<EpisodeRecord> episodes;

  // Per-run aggregates.
  std::vector<double> run_mean_returns() const { return per_run([](const auto& e) { return e.ret; }); }
  std::vector<double> run_mean_lengths() const {
    return per_run([](const auto& e) { return static_cast<double>(e.length); });
  }
  int runs() const {
    int r = 0;
    for (const auto& e : episodes) r = std::max(r, e.run + 1);
    return r;
  }
  double mean_return() const {
    std::vector<double> v;
    for (const auto& e : episodes) v.push_back(e.ret);
    return mean_of(v);
  }
  double mean_length() const {
    std::vector<double> v;
    for (const auto& e : episodes) v.push_back(e.length);
    return mean_of(v);
  }
  double converged_fraction() const {
    if (episodes.empty()) return 0.0;
    double c = 0.0;
    for (const auto& e : episodes) c += e.converged;
    return c / static_cast<double>(episodes.size());
  }
  double median_settle_step() const {
    std::vector<double> v;
    for (const auto& e : episodes) {
      if (e.converged && e.settle_step >= 0) v.push_back(e.settle_step);
    }
    return median_of(v);
  }
  /// Cart-pole: fraction of runs whose mean episode length is >= 195.
  double solved_run_fraction() const {
    const auto l = run_mean_lengths();
    if (l.empty()) return 0.0;
    double s = 0.0;
    for (double x : l) s += x >= kCartPoleSolveLength;
    return s / static_cast<double>(l.size());
  }
  /// Headline success rate: solved runs for cart-pole, converged episodes for pendulum.
  double success_rate() const {
    return env == "cartpole" ? solved_run_fraction() : converged_fraction();
  }

 private:
  template <typename F>
  std::vector<double> per_run(F f) const {
    const int n = runs();
    std::vector<double> sum(static_cast<std::size_t>(n), 0.0), cnt(static_cast<std::size_t>(n), 0.0);
    for (const auto& e : episodes) {
      sum[static_cast<std::size_t>(e.run)] += f(e);
      cnt[static_cast<std::size_t>(e.run)] += 1.0;
    }
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] /= std::max(cnt[i], 1.0);
    return sum;
  }
};

struct TraceRow {
  int t = 0;
  Vec state;
  Vec action;
  double reward = 0.0;
  bool done = false;
};

/// Deterministic-policy episode in a real environment; the environment must
/// already be reset or set to the start state.
inline EpisodeRecord run_episode(Environment& env, const PolicyParams& policy, Vec s,
                                 std::vector<TraceRow>* trace = nullptr) {
  const EnvSpec spec = env.spec();
  EpisodeRecord r;
  int upright_run = 0;
  for (int t = 0; t < spec.horizon; ++t) {
    const Vec a = deterministic_action(policy, s);
    const StepResult st = env.step(a);
    if (trace) trace->push_back({t, s, a, st.reward, st.done});
    r.ret += st.reward;
    ++r.length;
    s = st.observation;
    if (spec.name == "pendulum") {
      upright_run = pendulum_upright(s) ? upright_run + 1 : 0;
    }
    if (st.done) break;
  }
  if (spec.name == "pendulum") {
    r.converged = upright_run >= kPendulumSettleSteps;
    r.settle_step = r.converged ? r.length - upright_run : -1;
  } else {
    r.converged = r.length >= spec.horizon;
  }
  return r;
}

/// n_runs x n_trials deterministic episodes from the reset distribution, or
/// from `fixed_start` when given.
inline EvalReport evaluate_policy(const Environment& real, const PolicyParams& policy, int n_runs,
                                  int n_trials, Rng& rng,
                                  const std::optional<Vec>& fixed_start = std::nullopt) {
  EvalReport rep;
  rep.env = real.name();
  for (int run = 0; run < n_runs; ++run) {
    for (int k = 0; k < n_trials; ++k) {
      Environment env = real;
      Vec s = env.reset(rng);
      if (fixed_start) {
        env.set_state(*fixed_start);
        s = env.observe();
      }
      EpisodeRecord e = run_episode(env, policy, s);
      e.run = run;
      e.episode = k;
      rep.episodes.push_back(e);
    }
  }
  return rep;
}

struct RobustnessReport {
  EvalReport combined;  // run index = perturbed environment index
  std::vector<nlohmann::json> parameters;
  std::optional<Vec> start_state;

  int successes() const {
    int s = 0;
    const auto l = combined.run_mean_lengths();
    for (int k = 0; k < combined.runs(); ++k) {
      if (combined.env == "cartpole") {
        s += l[static_cast<std::size_t>(k)] >= kCartPoleSolveLength;
      } else {
        bool all = true;
        for (const auto& e : combined.episodes) {
          if (e.run == k) all = all && e.converged;
        }
        s += all;
      }
    }
    return s;
  }
};

inline nlohmann::json physical_parameters(const Environment& env) {
  if (const auto* p = std::get_if<Pendulum>(&env.variant())) {
    return {{"max_torque", p->params().max_torque}, {"max_speed", p->params().max_speed}};
  }
  const auto& c = std::get<CartPole>(env.variant());
  return {{"mass_cart", c.params().mass_cart}, {"mass_pole", c.params().mass_pole}};
}

/// Fixed policy on n_envs independently perturbed environments. Pendulum
/// uses one start state shared by every environment; cart-pole runs
/// `trials` reset-distribution episodes per environment.
inline RobustnessReport robustness_study(const Environment& real, const PolicyParams& policy,
                                         double perturbation_scale, int n_envs, int trials,
                                         Rng& rng) {
  RobustnessReport rep;
  rep.combined.env = real.name();
  Rng start_rng = rng.split(0);
  const bool pendulum = real.name() == "pendulum";
  if (pendulum) {
    Environment e = real;
    rep.start_state = e.reset(start_rng);
  }
  for (int k = 0; k < n_envs; ++k) {
    Rng prng = rng.split(2 * static_cast<std::uint64_t>(k) + 1);
    Rng erng = rng.split(2 * static_cast<std::uint64_t>(k) + 2);
    const Environment env = real.perturbed(perturbation_scale, prng);
    rep.parameters.push_back(physical_parameters(env));
    EvalReport r = evaluate_policy(env, policy, 1, pendulum ? 1 : trials, erng, rep.start_state);
    for (auto& e : r.episodes) {
      e.run = k;
      rep.combined.episodes.push_back(e);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationArm {
  std::string name;
  int seed = 0;
  int real_evaluations = 0;
  double mean_return = 0.0;              // real episodes of the trained policy
  std::vector<double> reward_variances;  // native units, one per visited (state, action)
  double trajectory_spread = 0.0;
};

struct AblationReport {
  std::vector<AblationArm> arms;
  RankTest test;
  double alpha = 0.05;
  bool variance_smaller() const { return test.p_value < alpha; }
};

/// Reward-GP predictive variance (native units, latent) at each input row.
inline std::vector<double> reward_variances(const VirtualEnv& venv, const Mat& inputs) {
  Vec mean, sd;
  venv.reward_gp().predict_batch(inputs, mean, sd);
  const double scale = venv.reward_gp().normalization().target_scale;
  std::vector<double> out(static_cast<std::size_t>(sd.size()));
  for (Index i = 0; i < sd.size(); ++i) {
    out[static_cast<std::size_t>(i)] = scale * scale * sd[i] * sd[i];
  }
  return out;
}

/// Distance to the target over the last 20 steps of a trace: |theta| for
/// pendulum, |x| + |theta| for cart-pole.
inline double trace_spread(const std::string& env, const std::vector<TraceRow>& trace) {
  const std::size_t from = trace.size() > 20 ? trace.size() - 20 : 0;
  double s = 0.0;
  for (std::size_t i = from; i < trace.size(); ++i) {
    const Vec& x = trace[i].state;
    s += env == "pendulum" ? std::abs(std::atan2(x[1], x[0])) : std::abs(x[0]) + std::abs(x[2]);
  }
  return trace.size() > from ? s / static_cast<double>(trace.size() - from) : 0.0;
}

/// Arm "adaptive": `initial` LHS points plus adaptive samples up to `budget`;
/// arm "lhs": `budget` LHS points. Both arms are trained with the same PPO
/// settings and seed, then run from the same real start states. Reward-GP
/// variance at the visited inputs is compared with a one-sided rank test
/// (H1: adaptive is smaller), pooled over seeds.
inline AblationReport ablation_adaptive_vs_lhs(const ExperimentConfig& config) {
  AblationReport rep;
  rep.alpha = config.ablation.alpha;
  std::vector<double> pooled_a, pooled_b;
  const Environment real = make_environment(config.env);
  const EnvSpec spec = real.spec();
  for (int s = 0; s < config.ablation.seeds; ++s) {
    const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(s);
    for (int arm = 0; arm < 2; ++arm) {
      BuildConfig bc = config.build;
      bc.env = config.env;
      bc.seed = seed;
      bc.fixed_budget = true;
      bc.budget = config.ablation.budget;
      bc.initial_samples = arm == 0 ? config.ablation.initial : config.ablation.budget;
      const BuildResult b = build_virtual_env(real, bc);
      TrainConfig tc = config.train;
      tc.seed = seed;
      const TrainResult tr = train_policy(b.venv, tc);

      AblationArm a;
      a.name = arm == 0 ? "adaptive" : "lhs";
      a.seed = static_cast<int>(seed);
      a.real_evaluations = b.report.real_evaluations;
      Rng erng = Rng(seed).split(7002);
      std::vector<Vec> inputs;
      for (int k = 0; k < config.ablation.episodes; ++k) {
        Environment env = real;
        std::vector<TraceRow> trace;
        const EpisodeRecord e = run_episode(env, tr.policy, env.reset(erng), &trace);
        a.mean_return += e.ret / config.ablation.episodes;
        a.trajectory_spread += trace_spread(config.env, trace) / config.ablation.episodes;
        for (const auto& row : trace) inputs.push_back(join(row.state, spec.canonical_action(row.action)));
      }
      Mat x(static_cast<Index>(inputs.size()), spec.input_dim());
      for (std::size_t i = 0; i < inputs.size(); ++i) x.row(static_cast<Index>(i)) = inputs[i].transpose();
      a.reward_variances = reward_variances(b.venv, x);
      auto& pool = arm == 0 ? pooled_a : pooled_b;
      pool.insert(pool.end(), a.reward_variances.begin(), a.reward_variances.end());
      rep.arms.push_back(std::move(a));
    }
  }
  rep.test = mann_whitney_less(pooled_a, pooled_b);
  return rep;
}

// ---------------------------------------------------------------------------
// Report export

inline CsvTable episodes_table(const EvalReport& r) {
  CsvTable t({"run", "episode", "return", "length", "converged", "settle_step"});
  for (const auto& e : r.episodes) {
    RowBuilder b;
    b << e.run << e.episode << e.ret << e.length << static_cast<int>(e.converged) << e.settle_step;
    t.add_row(b.take());
  }
  return t;
}

inline EvalReport episodes_from_table(const CsvTable& t, const std::string& env) {
  EvalReport r;
  r.env = env;
  const auto run = t.numeric_column("run");
  const auto ep = t.numeric_column("episode");
  const auto ret = t.numeric_column("return");
  const auto len = t.numeric_column("length");
  const auto conv = t.numeric_column("converged");
  const auto settle = t.numeric_column("settle_step");
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    r.episodes.push_back({static_cast<int>(run[i]), static_cast<int>(ep[i]), ret[i],
                          static_cast<int>(len[i]), conv[i] != 0.0, static_cast<int>(settle[i])});
  }
  return r;
}

inline nlohmann::json summary_json(const EvalReport& r) {
  nlohmann::json j = {{"env", r.env},
                      {"episodes", r.episodes.size()},
                      {"runs", r.runs()},
                      {"mean_return", r.mean_return()},
                      {"mean_length", r.mean_length()},
                      {"converged_fraction", r.converged_fraction()},
                      {"solved_run_fraction", r.solved_run_fraction()},
                      {"success_rate", r.success_rate()}};
  const double settle = r.median_settle_step();
  j["median_settle_step"] = std::isnan(settle) ? nlohmann::json(nullptr) : nlohmann::json(settle);
  return j;
}

inline std::string summary_text(const EvalReport& r) {
  std::ostringstream os;
  os << "environment: " << r.env << "\n"
     << "runs: " << r.runs() << ", episodes: " << r.episodes.size() << "\n"
     << "mean return: " << format_number(r.mean_return()) << "\n"
     << "mean length: " << format_number(r.mean_length()) << "\n"
     << "converged fraction: " << format_number(r.converged_fraction()) << "\n"
     << "success rate: " << format_number(r.success_rate()) << "\n";
  return os.str();
}

/// Writes <stem>.csv (per-episode rows) and <stem>.summary.json / .txt.
inline void export_report(const EvalReport& r, const std::filesystem::path& stem) {
  write_csv(stem.string() + ".csv", episodes_table(r));
  write_json(stem.string() + ".summary.json", summary_json(r));
  write_text(stem.string() + ".summary.txt", summary_text(r));
}

inline CsvTable trace_table(const std::vector<TraceRow>& rows, Index state_dim, Index action_dim) {
  std::vector<std::string> h = {"t"};
  for (Index i = 0; i < state_dim; ++i) h.push_back("s" + std::to_string(i));
  for (Index i = 0; i < action_dim; ++i) h.push_back("a" + std::to_string(i));
  h.emplace_back("reward");
  h.emplace_back("done");
  CsvTable t(h);
  for (const auto& r : rows) {
    RowBuilder b;
    b << r.t;
    for (Index i = 0; i < r.state.size(); ++i) b << r.state[i];
    for (Index i = 0; i < r.action.size(); ++i) b << r.action[i];
    b << r.reward << static_cast<int>(r.done);
    t.add_row(b.take());
  }
  return t;
}

/// Same start, same action sequence (chosen by the policy on the real
/// trajectory): real reward next to the virtual environment's shaped and
/// mean rewards at each step.
inline CsvTable real_vs_virtual_table(const Environment& real, const VirtualEnv& venv,
                                      const PolicyParams& policy, Rng& rng) {
  CsvTable t({"t", "real_reward", "virtual_reward", "virtual_reward_mean", "virtual_reward_std"});
  Environment env = real;
  Vec s = env.reset(rng);
  Vec v = s;
  for (int k = 0; k < env.spec().horizon; ++k) {
    const Vec a = deterministic_action(policy, s);
    const StepResult st = env.step(a);
    const VirtualStep vs = vstep_deterministic(venv, v, a);
    RowBuilder b;
    b << k << st.reward << vs.reward << vs.reward_mean << vs.reward_std;
    t.add_row(b.take());
    s = st.observation;
    v = vs.next_state;
    if (st.done) break;
  }
  return t;
}

inline CsvTable ablation_table(const AblationReport& r) {
  CsvTable t({"arm", "seed", "real_evaluations", "mean_return", "mean_reward_variance",
              "median_reward_variance", "trajectory_spread"});
  for (const auto& a : r.arms) {
    RowBuilder b;
    b << a.name << a.seed << a.real_evaluations << a.mean_return << mean_of(a.reward_variances)
      << median_of(a.reward_variances) << a.trajectory_spread;
    t.add_row(b.take());
  }
  return t;
}

inline CsvTable ablation_variance_table(const AblationReport& r) {
  CsvTable t({"arm", "seed", "index", "reward_variance"});
  for (const auto& a : r.arms) {
    for (std::size_t i = 0; i < a.reward_variances.size(); ++i) {
      RowBuilder b;
      b << a.name << a.seed << static_cast<int>(i) << a.reward_variances[i];
      t.add_row(b.take());
    }
  }
  return t;
}

inline CsvTable mc_samples_table(const Mat& samples, const Vec& density) {
  std::vector<std::string> h;
  for (Index j = 0; j < samples.cols(); ++j) h.push_back("x" + std::to_string(j));
  h.emplace_back("density");
  CsvTable t(h);
  for (Index i = 0; i < samples.rows(); ++i) {
    RowBuilder b;
    for (Index j = 0; j < samples.cols(); ++j) b << samples(i, j);
    b << density[i];
    t.add_row(b.take());
  }
  return t;
}

// ---------------------------------------------------------------------------
// Pipeline

struct AssertionResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ExperimentResult {
  BuildReport build;
  std::optional<VirtualEnv> venv;
  TrainResult training;
  EvalReport evaluation;
  std::optional<RobustnessReport> robustness;
  std::optional<AblationReport> ablation;
  std::vector<AssertionResult> assertions;
  long real_build_steps = 0;
  long real_eval_steps = 0;

  bool all_assertions_passed() const {
    for (const auto& a : assertions) {
      if (!a.passed) return false;
    }
    return true;
  }
};

template <typename F>
auto run_stage(const std::string& stage, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

inline void write_build_outputs(const std::filesystem::path& dir, const BuildSession& s) {
  write_json(dir / "venv.json", to_json(s.virtual_env()));
  write_csv(dir / "build_log.csv", build_log_table(s.report(), s.spec().state_dim));
  write_csv(dir / "sample_log.csv", sample_log_table(s.report(), s.spec().input_dim()));
  nlohmann::json j = {{"status", s.report().status},
                      {"real_evaluations", s.report().real_evaluations},
                      {"initial_samples", s.report().initial_samples},
                      {"adaptive_samples", s.report().adaptive_samples()},
                      {"initial_ci", s.report().initial_ci()},
                      {"final_ci", s.report().final_ci()},
                      {"warnings", s.report().warnings}};
  write_json(dir / "build_summary.json", j);
  write_json(dir / "timing.json", {{"build_seconds", s.report().seconds}});
}

/// build -> train -> evaluate (-> robustness, ablation); every artifact goes
/// under config.output_dir.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const std::filesystem::path dir = config.output_dir;
  run_stage("output", [&] {
    std::filesystem::create_directories(dir);
    return 0;
  });
  ExperimentResult res;
  const Environment real = make_environment(config.env);

  auto session = run_stage("build", [&] {
    BuildSession s(real, config.build);
    s.run();
    write_build_outputs(dir, s);
    return s;
  });
  res.build = session.report();
  res.real_build_steps = res.build.real_evaluations;
  const VirtualEnv venv = session.virtual_env();
  res.venv = venv;

  res.training = run_stage("train", [&] {
    TrainResult t = train_policy(venv, config.train);
    write_json(dir / "policy.json", to_json(t.policy));
    write_json(dir / "value.json", to_json(t.value));
    write_csv(dir / "learning_curve.csv", learning_curve_table(t.curve));
    return t;
  });

  res.evaluation = run_stage("evaluate", [&] {
    Rng rng = Rng(config.seed).split(5001);
    const Environment eval_env = make_environment(config.env, config.evaluation.reset_scale);
    EvalReport r = evaluate_policy(eval_env, res.training.policy, config.evaluation.runs,
                                   config.evaluation.trials, rng);
    export_report(r, dir / "evaluation");
    Rng trng = Rng(config.seed).split(5002);
    std::vector<TraceRow> trace;
    Environment e = eval_env;
    run_episode(e, res.training.policy, e.reset(trng), &trace);
    write_csv(dir / "trace_real.csv",
              trace_table(trace, venv.spec().state_dim, venv.spec().action_dim));
    Rng vrng = Rng(config.seed).split(5003);
    write_csv(dir / "trace_real_vs_virtual.csv",
              real_vs_virtual_table(real, venv, res.training.policy, vrng));
    return r;
  });
  for (const auto& e : res.evaluation.episodes) res.real_eval_steps += e.length;

  if (config.robustness.enabled) {
    res.robustness = run_stage("robustness", [&] {
      Rng rng = Rng(config.seed).split(6001);
      RobustnessReport r = robustness_study(real, res.training.policy,
                                            config.robustness.perturbation_scale,
                                            config.robustness.envs, config.robustness.trials, rng);
      export_report(r.combined, dir / "robustness");
      write_json(dir / "robustness_parameters.json", r.parameters);
      return r;
    });
    for (const auto& e : res.robustness->combined.episodes) res.real_eval_steps += e.length;
  }

  if (config.ablation.enabled) {
    res.ablation = run_stage("ablation", [&] {
      AblationReport r = ablation_adaptive_vs_lhs(config);
      write_csv(dir / "ablation.csv", ablation_table(r));
      write_csv(dir / "ablation_variances.csv", ablation_variance_table(r));
      write_json(dir / "ablation_test.json",
                 {{"u", r.test.u}, {"p_value", r.test.p_value}, {"alpha", r.alpha},
                  {"variance_smaller", r.variance_smaller()}});
      return r;
    });
  }

  const auto& a = config.assertions;
  if (a.max_real_evaluations) {
    res.assertions.push_back({"max_real_evaluations",
                              res.build.real_evaluations <= *a.max_real_evaluations,
                              std::to_string(res.build.real_evaluations) + " <= " +
                                  std::to_string(*a.max_real_evaluations)});
  }
  if (a.min_success_rate) {
    res.assertions.push_back({"min_success_rate",
                              res.evaluation.success_rate() >= *a.min_success_rate,
                              format_number(res.evaluation.success_rate()) +
                                  " >= " + format_number(*a.min_success_rate)});
  }
  if (a.min_robust_successes) {
    const int s = res.robustness ? res.robustness->successes() : 0;
    res.assertions.push_back({"min_robust_successes", s >= *a.min_robust_successes,
                              std::to_string(s) + " >= " + std::to_string(*a.min_robust_successes)});
  }
  if (a.max_ablation_p_value) {
    const double p = res.ablation ? res.ablation->test.p_value : 1.0;
    res.assertions.push_back({"max_ablation_p_value", p <= *a.max_ablation_p_value,
                              format_number(p) + " <= " + format_number(*a.max_ablation_p_value)});
  }

  nlohmann::json assertions = nlohmann::json::array();
  for (const auto& r : res.assertions) {
    assertions.push_back({{"name", r.name}, {"passed", r.passed}, {"detail", r.detail}});
  }
  write_json(dir / "summary.json",
             {{"env", config.env},
              {"seed", config.seed},
              {"build_status", res.build.status},
              {"real_build_steps", res.real_build_steps},
              {"real_eval_steps", res.real_eval_steps},
              {"training_steps", res.training.total_steps},
              {"training_stopped_early", res.training.stopped_early},
              {"evaluation", summary_json(res.evaluation)},
              {"robust_successes",
               res.robustness ? nlohmann::json(res.robustness->successes()) : nlohmann::json(nullptr)},
              {"assertions", assertions},
              {"passed", res.all_assertions_passed()}});
  return res;
}

}  // namespace aur
