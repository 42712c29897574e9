#pragma once

// Virtual-environment construction: Latin hypercube seeding, one real step
// per design point, D+1 GP fits, then confidence-driven adaptive sampling
// until every GP reaches the target CI or the real-evaluation budget runs out.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "aur/acquisition.hpp"
#include "aur/design.hpp"
#include "aur/environments.hpp"
#include "aur/gp.hpp"
#include "aur/io.hpp"
#include "aur/monte_carlo.hpp"
#include "aur/virtual_env.hpp"

namespace aur {

/// Budget cap used when none is configured: four times the evaluation counts
/// reported for each benchmark.
inline int default_budget(const std::string& env) {
  if (env == "pendulum") return 500;
  if (env == "cartpole") return 480;
  throw InvalidInput("no default budget for environment '" + env + "'");
}

struct BuildConfig {
  std::string env = "pendulum";
  double target_ci = 0.999;
  int initial_samples = 0;  // 0: 10 (D + F)
  Index mc_samples = 1000;
  int budget = 0;  // 0: default_budget(env)
  int refit_period = 5;
  McMode mc_mode = McMode::kRollout;
  // Ignore the CI target and keep sampling until exactly `budget` real
  // evaluations have been spent.
  bool fixed_budget = false;
  std::uint64_t seed = 0;
  FitOptions fit;  // initial fit
  int refit_restarts = 0;
  int refit_iterations = 60;
  VirtualEnvOptions venv;

  int resolved_initial(const EnvSpec& spec) const {
    return initial_samples > 0 ? initial_samples : static_cast<int>(10 * spec.input_dim());
  }
  int resolved_budget() const { return budget > 0 ? budget : default_budget(env); }

  void validate(const EnvSpec& spec) const {
    if (!(target_ci >= 0.5 && target_ci < 1.0)) {
      throw InvalidInput("BuildConfig: target_ci must be in [0.5, 1)");
    }
    if (resolved_budget() < resolved_initial(spec)) {
      throw InvalidInput("BuildConfig: budget " + std::to_string(resolved_budget()) +
                         " is below the initial sample count " +
                         std::to_string(resolved_initial(spec)));
    }
    if (mc_samples < 2) throw InvalidInput("BuildConfig: mc_samples must be >= 2");
    if (refit_period < 1) throw InvalidInput("BuildConfig: refit_period must be >= 1");
  }
};

struct IterationRecord {
  int iteration = 0;
  int real_evaluations = 0;  // before this iteration's probes
  int new_samples = 0;
  std::vector<double> ci;    // per GP, state dims then reward
};

struct SampleRecord {
  int iteration = 0;
  int gp = 0;
  int evaluation = 0;  // 1-based index of the real probe that served it
  double u_value = 0.0;
  double log_u = 0.0;  // log U; -inf only for degenerate picks
  bool degenerate = false;
  bool shared = false;  // served by a probe another GP requested first
  Vec input;
};

struct BuildReport {
  std::string env;
  std::string status = "running";
  int initial_samples = 0;
  int real_evaluations = 0;
  std::vector<IterationRecord> iterations;
  std::vector<SampleRecord> samples;
  std::vector<std::string> warnings;
  double seconds = 0.0;

  const std::vector<double>& initial_ci() const { return iterations.front().ci; }
  const std::vector<double>& final_ci() const { return iterations.back().ci; }
  int adaptive_samples() const { return real_evaluations - initial_samples; }
};

inline std::vector<std::string> gp_names(Index state_dim) {
  std::vector<std::string> n;
  for (Index i = 0; i < state_dim; ++i) n.push_back("s" + std::to_string(i));
  n.emplace_back("reward");
  return n;
}

/// One row per loop pass; row 0 is the low-fidelity model after the initial fit.
inline CsvTable build_log_table(const BuildReport& r, Index state_dim) {
  std::vector<std::string> h = {"iteration", "real_evaluations", "new_samples"};
  for (const auto& n : gp_names(state_dim)) h.push_back("ci_" + n);
  CsvTable t(h);
  for (const auto& it : r.iterations) {
    RowBuilder b;
    b << it.iteration << it.real_evaluations << it.new_samples;
    for (double c : it.ci) b << c;
    t.add_row(b.take());
  }
  return t;
}

inline CsvTable sample_log_table(const BuildReport& r, Index input_dim) {
  std::vector<std::string> h = {"iteration", "gp", "evaluation", "u", "log_u", "degenerate", "shared"};
  for (Index j = 0; j < input_dim; ++j) h.push_back("x" + std::to_string(j));
  CsvTable t(h);
  for (const auto& s : r.samples) {
    RowBuilder b;
    b << s.iteration << s.gp << s.evaluation << s.u_value << s.log_u << static_cast<int>(s.degenerate)
      << static_cast<int>(s.shared);
    for (Index j = 0; j < s.input.size(); ++j) b << s.input[j];
    t.add_row(b.take());
  }
  return t;
}

struct ProbeResult {
  Vec input;  // canonical [state, action] actually applied
  Vec delta;
  double reward = 0.0;
};

/// Sets the real environment to the state part of x, applies the action part
/// for one step and records (x_{t+1} - x_t, r).
inline ProbeResult probe_real(Environment& env, const Vec& x) {
  const EnvSpec spec = env.spec();
  if (x.size() != spec.input_dim() || !x.allFinite()) {
    throw ProbeError("probe_real: input must be a finite " + std::to_string(spec.input_dim()) +
                     "-vector");
  }
  const Vec lo = spec.bounds.lower();
  const Vec hi = spec.bounds.upper();
  for (Index j = 0; j < x.size(); ++j) {
    const double slack = 1e-9 * (hi[j] - lo[j]);
    if (x[j] < lo[j] - slack || x[j] > hi[j] + slack) {
      throw ProbeError("probe_real: dimension " + std::to_string(j) + " value " +
                       format_number(x[j]) + " outside [" + format_number(lo[j]) + ", " +
                       format_number(hi[j]) + "]");
    }
  }
  ProbeResult r;
  const Vec state = spec.canonical_state(x.head(spec.state_dim));
  const Vec action = spec.canonical_action(x.tail(spec.action_dim));
  r.input = join(state, action);
  env.set_state(state);
  const StepResult s = env.step(action);
  r.delta = s.observation - state;
  r.reward = s.reward;
  return r;
}

namespace detail {

inline GPModel refit_or_rebuild(const GPModel& m, const Mat& inputs, const Vec& targets,
                                bool refit, const FitOptions& opts, Rng& rng) {
  if (!refit) return GPModel::from_parts(m.normalization(), m.hyperparams(), inputs, targets);
  FitOptions o = opts;
  o.warm_start = m.hyperparams();
  return fit_targets(inputs, targets, o, rng);
}

}  // namespace detail

/// Resumable build loop. Each loop pass draws randomness from its own
/// stream split off the master seed, so a session restored from `state()`
/// continues exactly as an uninterrupted one would.
class BuildSession {
 public:
  BuildSession(Environment real, BuildConfig config)
      : real_(std::move(real)), config_(std::move(config)), spec_(real_.spec()) {
    config_.env = spec_.name;
    config_.validate(spec_);
    const auto t0 = std::chrono::steady_clock::now();
    report_.env = spec_.name;
    data_ = Dataset(spec_.input_dim(), spec_.state_dim);
    Rng rng = Rng(config_.seed).split(0);
    const int n0 = config_.resolved_initial(spec_);
    const Mat design = lhs_sample(spec_.bounds, n0, rng);
    for (Index i = 0; i < design.rows(); ++i) {
      const ProbeResult p = probe_real(real_, design.row(i).transpose());
      ++report_.real_evaluations;
      append_point(p);
    }
    report_.initial_samples = report_.real_evaluations;
    try {
      for (Index c = 0; c < data_.target_count(); ++c) {
        models_.push_back(fit(data_, c, config_.fit, rng));
      }
    } catch (const std::exception& e) {
      throw StageError("build (initial fit)", e.what());
    }
    add_seconds(t0);
  }

  static BuildSession resume(Environment real, const nlohmann::json& state) {
    return BuildSession(std::move(real), state);
  }

  bool done() const { return report_.status != "running"; }
  const BuildConfig& config() const { return config_; }
  const EnvSpec& spec() const { return spec_; }
  const Dataset& data() const { return data_; }
  const std::vector<GPModel>& models() const { return models_; }
  const BuildReport& report() const { return report_; }
  int next_iteration() const { return static_cast<int>(report_.iterations.size()); }

  VirtualEnv virtual_env() const {
    BuildInfo info;
    info.status = report_.status;
    info.real_evaluations = report_.real_evaluations;
    info.iterations = next_iteration();
    if (!report_.iterations.empty()) info.final_ci = report_.final_ci();
    std::vector<GPModel> state(models_.begin(), models_.end() - 1);
    return VirtualEnv(spec_.name, std::move(state), models_.back(), config_.venv, info,
                      reset_scale());
  }

  /// One pass of the loop: fresh MC set, CI per GP, then (unless finished)
  /// one adaptive probe per below-target GP and an update of every GP.
  void step() {
    if (done()) return;
    const auto t0 = std::chrono::steady_clock::now();
    const int it = next_iteration();
    Rng rng = Rng(config_.seed).split(static_cast<std::uint64_t>(it) + 1);
    const VirtualEnv venv = virtual_env();
    const Mat mc = generate_mc_samples(venv, nullptr, config_.mc_samples, spec_.horizon, rng,
                                       config_.mc_mode);
    const KDEModel kde = kde_fit(mc, spec_.bounds.ranges());
    const Vec density = kde_eval_batch(kde, mc);

    IterationRecord rec;
    rec.iteration = it;
    rec.real_evaluations = report_.real_evaluations;
    std::vector<ConfidenceReport> reports;
    for (const auto& m : models_) {
      reports.push_back(confidence_report(m, density, mc));
      rec.ci.push_back(reports.back().confidence_index);
    }

    const int budget = config_.resolved_budget();
    bool all_met = true;
    for (double c : rec.ci) all_met = all_met && c >= config_.target_ci;
    if (!config_.fixed_budget && all_met) {
      report_.status = "converged";
    } else if (report_.real_evaluations >= budget) {
      report_.status = config_.fixed_budget ? "fixed_budget" : "budget_exhausted";
    }
    if (done()) {
      report_.iterations.push_back(rec);
      add_seconds(t0);
      return;
    }

    // Candidate index -> probe result, so GPs choosing the same point share one probe.
    std::vector<std::pair<Index, int>> probed;  // (candidate, evaluation number)
    const Vec scale = models_.front().normalization().input_scale;
    for (std::size_t g = 0; g < models_.size(); ++g) {
      if (!config_.fixed_budget && rec.ci[g] >= config_.target_ci) continue;
      const auto choice = choose_candidate(mc, reports[g], scale, probed);
      if (!choice) {
        report_.warnings.push_back("iteration " + std::to_string(it) + ": GP " +
                                   std::to_string(g) + " found no admissible candidate");
        continue;
      }
      SampleRecord s;
      s.iteration = it;
      s.gp = static_cast<int>(g);
      s.u_value = reports[g].index[choice->candidate];
      s.log_u = reports[g].log_index[choice->candidate];
      s.degenerate = choice->degenerate;
      if (s.degenerate) {
        report_.warnings.push_back("iteration " + std::to_string(it) + ": GP " +
                                   std::to_string(g) +
                                   " had zero input probability everywhere; used U_m alone");
      }
      for (const auto& [cand, ev] : probed) {
        if (cand == choice->candidate) {
          s.shared = true;
          s.evaluation = ev;
        }
      }
      if (!s.shared) {
        if (report_.real_evaluations >= budget) break;
        const ProbeResult p = probe_real(real_, choice->sample);
        ++report_.real_evaluations;
        append_point(p);
        s.evaluation = report_.real_evaluations;
        probed.emplace_back(choice->candidate, s.evaluation);
        ++rec.new_samples;
      }
      s.input = data_.inputs.row(s.evaluation - 1).transpose();
      report_.samples.push_back(std::move(s));
    }
    report_.iterations.push_back(rec);

    const bool refit = (it % config_.refit_period) == 0;
    FitOptions refit_opts;
    refit_opts.restarts = config_.refit_restarts;
    refit_opts.iterations = config_.refit_iterations;
    try {
      for (std::size_t g = 0; g < models_.size(); ++g) {
        models_[g] = detail::refit_or_rebuild(models_[g], data_.inputs,
                                              data_.target(static_cast<Index>(g)), refit,
                                              refit_opts, rng);
      }
    } catch (const std::exception& e) {
      throw StageError("build (iteration " + std::to_string(it) + ")", e.what());
    }
    add_seconds(t0);
  }

  /// Runs until converged / out of budget, or for at most `max_passes` passes.
  void run(std::optional<int> max_passes = std::nullopt) {
    for (int k = 0; !done() && (!max_passes || k < *max_passes); ++k) step();
  }

  nlohmann::json state() const {
    nlohmann::json models = nlohmann::json::array();
    for (const auto& m : models_) models.push_back(to_json(m));
    nlohmann::json its = nlohmann::json::array();
    for (const auto& r : report_.iterations) {
      its.push_back({{"iteration", r.iteration},
                     {"real_evaluations", r.real_evaluations},
                     {"new_samples", r.new_samples},
                     {"ci", r.ci}});
    }
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : report_.samples) {
      samples.push_back({{"iteration", s.iteration},
                         {"gp", s.gp},
                         {"evaluation", s.evaluation},
                         {"u", s.u_value},
                         {"log_u", std::isfinite(s.log_u) ? nlohmann::json(s.log_u) : nlohmann::json(nullptr)},
                         {"degenerate", s.degenerate},
                         {"shared", s.shared},
                         {"input", detail::vec_to_json(s.input)}});
    }
    return {{"format", "aur-build-state"},
            {"version", 1},
            {"config", config_to_json(config_)},
            {"status", report_.status},
            {"initial_samples", report_.initial_samples},
            {"real_evaluations", report_.real_evaluations},
            {"seconds", report_.seconds},
            {"warnings", report_.warnings},
            {"iterations", its},
            {"samples", samples},
            {"data",
             {{"inputs", detail::mat_to_json(data_.inputs)},
              {"state_deltas", detail::mat_to_json(data_.state_deltas)},
              {"rewards", detail::vec_to_json(data_.rewards)}}},
            {"models", models}};
  }

  static nlohmann::json config_to_json(const BuildConfig& c) {
    return {{"env", c.env},
            {"target_ci", c.target_ci},
            {"initial_samples", c.initial_samples},
            {"mc_samples", c.mc_samples},
            {"budget", c.budget},
            {"refit_period", c.refit_period},
            {"mc_mode", to_string(c.mc_mode)},
            {"fixed_budget", c.fixed_budget},
            {"seed", c.seed},
            {"fit_restarts", c.fit.restarts},
            {"fit_iterations", c.fit.iterations},
            {"refit_restarts", c.refit_restarts},
            {"refit_iterations", c.refit_iterations},
            {"pessimism", c.venv.pessimism},
            {"particles", c.venv.particles},
            {"reset_spread", c.venv.reset_spread}};
  }

  static BuildConfig config_from_json(const nlohmann::json& j) {
    BuildConfig c;
    c.env = j.at("env").get<std::string>();
    c.target_ci = j.at("target_ci").get<double>();
    c.initial_samples = j.at("initial_samples").get<int>();
    c.mc_samples = j.at("mc_samples").get<Index>();
    c.budget = j.at("budget").get<int>();
    c.refit_period = j.at("refit_period").get<int>();
    c.mc_mode = mc_mode_from_string(j.at("mc_mode").get<std::string>());
    c.fixed_budget = j.at("fixed_budget").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.fit.restarts = j.at("fit_restarts").get<int>();
    c.fit.iterations = j.at("fit_iterations").get<int>();
    c.refit_restarts = j.at("refit_restarts").get<int>();
    c.refit_iterations = j.at("refit_iterations").get<int>();
    c.venv.pessimism = j.at("pessimism").get<double>();
    c.venv.particles = j.at("particles").get<Index>();
    c.venv.reset_spread = j.at("reset_spread").get<double>();
    return c;
  }

 private:
  BuildSession(Environment real, const nlohmann::json& j) : real_(std::move(real)) {
    try {
      if (j.at("format") != "aur-build-state" || j.at("version").get<int>() != 1) {
        throw FormatError("not a version-1 build state");
      }
      config_ = config_from_json(j.at("config"));
      spec_ = real_.spec();
      if (config_.env != spec_.name) throw FormatError("build state is for " + config_.env);
      report_.env = spec_.name;
      report_.status = j.at("status").get<std::string>();
      report_.initial_samples = j.at("initial_samples").get<int>();
      report_.real_evaluations = j.at("real_evaluations").get<int>();
      report_.seconds = j.at("seconds").get<double>();
      report_.warnings = j.at("warnings").get<std::vector<std::string>>();
      for (const auto& r : j.at("iterations")) {
        report_.iterations.push_back({r.at("iteration").get<int>(),
                                      r.at("real_evaluations").get<int>(),
                                      r.at("new_samples").get<int>(),
                                      r.at("ci").get<std::vector<double>>()});
      }
      for (const auto& s : j.at("samples")) {
        SampleRecord rec;
        rec.iteration = s.at("iteration").get<int>();
        rec.gp = s.at("gp").get<int>();
        rec.evaluation = s.at("evaluation").get<int>();
        rec.u_value = s.at("u").get<double>();
        rec.log_u = s.at("log_u").is_null() ? -std::numeric_limits<double>::infinity()
                                            : s.at("log_u").get<double>();
        rec.degenerate = s.at("degenerate").get<bool>();
        rec.shared = s.at("shared").get<bool>();
        rec.input = detail::vec_from_json(s.at("input"));
        report_.samples.push_back(std::move(rec));
      }
      const auto& d = j.at("data");
      data_ = Dataset(spec_.input_dim(), spec_.state_dim);
      data_.inputs = detail::mat_from_json(d.at("inputs"), spec_.input_dim());
      data_.state_deltas = detail::mat_from_json(d.at("state_deltas"), spec_.state_dim);
      data_.rewards = detail::vec_from_json(d.at("rewards"));
      for (const auto& m : j.at("models")) models_.push_back(gp_from_json(m));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed build state: ") + e.what());
    }
  }

  double reset_scale() const {
    if (const auto* p = std::get_if<Pendulum>(&real_.variant())) {
      return p->params().reset_speed / PendulumParams{}.reset_speed;
    }
    const auto& c = std::get<CartPole>(real_.variant());
    return c.params().reset_half_width / CartPoleParams{}.reset_half_width;
  }

  void append_point(const ProbeResult& p) {
    const Vec scale = models_.empty() ? spec_.bounds.ranges()
                                      : models_.front().normalization().input_scale;
    data_.append(p.input, p.delta, p.reward, scale);
  }

  // Highest-U candidate whose canonical form is not already in the data set;
  // a candidate already probed this pass is admissible (it will be shared).
  std::optional<AdaptiveSample> choose_candidate(const Mat& mc, const ConfidenceReport& r,
                                                 const Vec& scale,
                                                 const std::vector<std::pair<Index, int>>& probed) const {
    const bool degenerate = !std::isfinite(r.log_index.maxCoeff());
    const Vec& score = degenerate ? r.log_uncertainty : r.log_index;
    std::vector<Index> order(static_cast<std::size_t>(mc.rows()));
    for (Index i = 0; i < mc.rows(); ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return score[a] > score[b]; });
    for (Index cand : order) {
      bool already = false;
      for (const auto& pr : probed) already = already || pr.first == cand;
      const Vec x = mc.row(cand).transpose();
      const Vec canon = join(spec_.canonical_state(x.head(spec_.state_dim)),
                             spec_.canonical_action(x.tail(spec_.action_dim)));
      if (already || data_.nearest_distance(canon, scale) >= 1e-9) {
        AdaptiveSample s;
        s.candidate = cand;
        s.sample = x;
        s.value = r.index[cand];
        s.log_value = r.log_index[cand];
        s.degenerate = degenerate;
        return s;
      }
    }
    return std::nullopt;
  }

  void add_seconds(std::chrono::steady_clock::time_point t0) {
    report_.seconds +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  Environment real_;
  BuildConfig config_;
  EnvSpec spec_;
  Dataset data_;
  std::vector<GPModel> models_;
  BuildReport report_;
};

struct BuildResult {
  VirtualEnv venv;
  BuildReport report;
};

inline BuildResult build_virtual_env(const Environment& real, const BuildConfig& config) {
  BuildSession s(real, config);
  s.run();
  return {s.virtual_env(), s.report()};
}

/// Real transitions from uniformly random actions, starting at the reset
/// distribution; used as a held-out set for one-step prediction error.
inline Dataset heldout_transitions(Environment env, Index n, Rng& rng) {
  const EnvSpec spec = env.spec();
  Dataset d(spec.input_dim(), spec.state_dim);
  d.inputs.resize(n, spec.input_dim());
  d.state_deltas.resize(n, spec.state_dim);
  d.rewards.resize(n);
  Vec s = env.reset(rng);
  for (Index i = 0; i < n; ++i) {
    const Vec a = random_action(spec, rng);
    const StepResult r = env.step(a);
    d.inputs.row(i) = join(s, spec.canonical_action(a)).transpose();
    d.state_deltas.row(i) = (r.observation - s).transpose();
    d.rewards[i] = r.reward;
    s = r.observation;
    if (r.done) s = env.reset(rng);
  }
  return d;
}

/// Per-GP one-step RMSE on a held-out set, each divided by the held-out
/// target's standard deviation (so dimensions are comparable).
inline std::vector<double> one_step_rmse(const std::vector<GPModel>& models, const Dataset& d) {
  std::vector<double> out;
  for (std::size_t g = 0; g < models.size(); ++g) {
    const Vec y = d.target(static_cast<Index>(g));
    Vec mean, sd;
    models[g].predict_batch(d.inputs, mean, sd);
    const double rmse = std::sqrt((mean - y).squaredNorm() / static_cast<double>(y.size()));
    const double ysd = std::sqrt((y.array() - y.mean()).square().mean());
    out.push_back(ysd > 0.0 ? rmse / ysd : rmse);
  }
  return out;
}

}  // namespace aur
