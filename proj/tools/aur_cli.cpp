// aur: build virtual environments, train policies and run the evaluation
// harness from the command line.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "aur/aur.hpp"

namespace fs = std::filesystem;
using namespace aur;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "aur_out";
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Master seed");
  app->add_option("--out", c.out, "Output directory");
}

ExperimentConfig load_config(const Common& c, const std::optional<std::string>& env = std::nullopt) {
  nlohmann::json j = nlohmann::json::object();
  if (!c.config.empty()) j = read_json(c.config);
  if (env) j["env"] = *env;
  if (c.seed) j["seed"] = *c.seed;
  j["output_dir"] = c.out;
  return experiment_config_from_json(j);
}

void print_eval(const EvalReport& r) { std::cout << summary_text(r); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active uncertainty reduction: GP virtual environments and PPO"};
  app.require_subcommand(1);

  // build-env
  Common build_c;
  std::optional<std::string> build_env;
  std::optional<double> target_ci;
  std::optional<int> budget, initial;
  std::optional<long> mc;
  bool fixed_budget = false;
  std::string resume, dump_mc;
  auto* build = app.add_subcommand("build-env", "Build a virtual environment from real probes");
  add_common(build, build_c);
  build->add_option("--env", build_env, "pendulum | cartpole");
  build->add_option("--target-ci", target_ci, "CI target for every GP");
  build->add_option("--budget", budget, "Cap on real single-step evaluations");
  build->add_option("--initial", initial, "Initial LHS sample count");
  build->add_option("--mc", mc, "Monte Carlo samples per iteration");
  build->add_flag("--fixed-budget", fixed_budget, "Sample until the budget is spent");
  build->add_option("--resume", resume, "Resume from a saved build_state.json")
      ->check(CLI::ExistingFile);
  build->add_option("--dump-mc", dump_mc, "Write the final MC sample set with densities to CSV");

  // train-policy
  Common train_c;
  std::string env_model, variant, train_json;
  std::optional<long> total_steps;
  auto* train = app.add_subcommand("train-policy", "Train a PPO policy in a virtual environment");
  add_common(train, train_c);
  train->add_option("--env-model", env_model, "venv.json from build-env")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--variant", variant, "aur-d | aur-p");
  train->add_option("--train-config", train_json, "PPO settings (JSON)")->check(CLI::ExistingFile);
  train->add_option("--steps", total_steps, "Virtual interaction cap");

  // evaluate / robustness
  Common eval_c;
  std::string policy_path;
  std::optional<std::string> eval_env;
  std::optional<int> runs, trials;
  std::optional<double> reset_scale;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a policy in the real environment");
  add_common(evaluate, eval_c);
  evaluate->add_option("--policy", policy_path, "policy.json")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--env", eval_env, "pendulum | cartpole");
  evaluate->add_option("--runs", runs, "Independent runs");
  evaluate->add_option("--trials", trials, "Episodes per run");
  evaluate->add_option("--reset-scale", reset_scale, "Widen the reset distribution");

  Common rob_c;
  std::string rob_policy;
  std::optional<std::string> rob_env;
  std::optional<int> rob_envs, rob_trials;
  std::optional<double> rob_scale;
  auto* robust = app.add_subcommand("robustness", "Evaluate a fixed policy on perturbed physics");
  add_common(robust, rob_c);
  robust->add_option("--policy", rob_policy, "policy.json")->required()->check(CLI::ExistingFile);
  robust->add_option("--env", rob_env, "pendulum | cartpole");
  robust->add_option("--envs", rob_envs, "Number of perturbed environments");
  robust->add_option("--scale", rob_scale, "Relative perturbation scale");
  robust->add_option("--trials", rob_trials, "Cart-pole episodes per environment");

  Common abl_c;
  std::optional<std::string> abl_env;
  auto* ablate = app.add_subcommand("ablate", "Adaptive sampling vs LHS-only at equal budget");
  add_common(ablate, abl_c);
  ablate->add_option("--env", abl_env, "pendulum | cartpole");

  Common all_c;
  std::optional<std::string> all_env;
  auto* run_all = app.add_subcommand("run-all", "Build, train, evaluate and check assertions");
  add_common(run_all, all_c);
  run_all->add_option("--env", all_env, "pendulum | cartpole");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*build) {
      const ExperimentConfig ec = load_config(build_c, build_env);
      BuildConfig bc = ec.build;
      if (target_ci) bc.target_ci = *target_ci;
      if (budget) bc.budget = *budget;
      if (initial) bc.initial_samples = *initial;
      if (mc) bc.mc_samples = *mc;
      if (fixed_budget) bc.fixed_budget = true;
      const Environment real = make_environment(ec.env);
      BuildSession s = resume.empty() ? BuildSession(real, bc)
                                      : BuildSession::resume(real, read_json(resume));
      s.run();
      const fs::path dir = build_c.out;
      write_build_outputs(dir, s);
      write_json(dir / "build_state.json", s.state());
      if (!dump_mc.empty()) {
        Rng rng = Rng(bc.seed).split(9001);
        const VirtualEnv venv = s.virtual_env();
        const Mat samples =
            generate_mc_samples(venv, nullptr, bc.mc_samples, venv.spec().horizon, rng, bc.mc_mode);
        const KDEModel kde = kde_fit(samples, venv.spec().bounds.upper() - venv.spec().bounds.lower());
        write_csv(dump_mc, mc_samples_table(samples, kde_eval_batch(kde, samples)));
      }
      const BuildReport& r = s.report();
      std::cout << "status: " << r.status << "\nreal evaluations: " << r.real_evaluations
                << " (initial " << r.initial_samples << ", adaptive " << r.adaptive_samples()
                << ")\n";
      for (std::size_t g = 0; g < r.final_ci().size(); ++g) {
        std::cout << "CI " << gp_names(s.spec().state_dim)[g] << ": "
                  << format_number(r.initial_ci()[g]) << " -> " << format_number(r.final_ci()[g])
                  << "\n";
      }
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
      return 0;
    }

    if (*train) {
      const VirtualEnv venv = virtual_env_from_json(read_json(env_model));
      const ExperimentConfig ec = load_config(train_c, venv.spec().name);
      TrainConfig tc = ec.train;
      if (!train_json.empty()) tc = train_config_from_json(read_json(train_json), tc);
      if (!variant.empty()) tc.variant = step_variant_from_string(variant);
      if (train_c.seed) tc.seed = *train_c.seed;
      if (total_steps) tc.total_steps = *total_steps;
      const TrainResult t = train_policy(venv, tc);
      const fs::path dir = train_c.out;
      write_json(dir / "policy.json", to_json(t.policy));
      write_json(dir / "value.json", to_json(t.value));
      write_csv(dir / "learning_curve.csv", learning_curve_table(t.curve));
      write_json(dir / "train_config.json", train_config_to_json(tc));
      std::cout << "virtual steps: " << t.total_steps << (t.stopped_early ? " (plateau stop)" : "")
                << "\nfinal batch mean return: "
                << (t.curve.empty() ? std::string("n/a") : format_number(t.curve.back().mean_return))
                << "\n";
      for (const auto& e : t.events) std::cerr << "event: " << e << "\n";
      return 0;
    }

    if (*evaluate) {
      const PolicyParams policy = policy_from_json(read_json(policy_path));
      const ExperimentConfig ec = load_config(eval_c, eval_env ? eval_env : policy.env);
      const Environment env =
          make_environment(ec.env, reset_scale.value_or(ec.evaluation.reset_scale));
      Rng rng = Rng(ec.seed).split(5001);
      const EvalReport r = evaluate_policy(env, policy, runs.value_or(ec.evaluation.runs),
                                           trials.value_or(ec.evaluation.trials), rng);
      export_report(r, fs::path(eval_c.out) / "evaluation");
      print_eval(r);
      return 0;
    }

    if (*robust) {
      const PolicyParams policy = policy_from_json(read_json(rob_policy));
      const ExperimentConfig ec = load_config(rob_c, rob_env ? rob_env : policy.env);
      Rng rng = Rng(ec.seed).split(6001);
      const RobustnessReport r = robustness_study(
          make_environment(ec.env), policy, rob_scale.value_or(ec.robustness.perturbation_scale),
          rob_envs.value_or(ec.robustness.envs), rob_trials.value_or(ec.robustness.trials), rng);
      export_report(r.combined, fs::path(rob_c.out) / "robustness");
      write_json(fs::path(rob_c.out) / "robustness_parameters.json", r.parameters);
      print_eval(r.combined);
      std::cout << "successful environments: " << r.successes() << " / " << r.combined.runs()
                << "\n";
      return 0;
    }

    if (*ablate) {
      ExperimentConfig ec = load_config(abl_c, abl_env);
      ec.ablation.enabled = true;
      const AblationReport r = ablation_adaptive_vs_lhs(ec);
      const fs::path dir = abl_c.out;
      write_csv(dir / "ablation.csv", ablation_table(r));
      write_csv(dir / "ablation_variances.csv", ablation_variance_table(r));
      write_json(dir / "ablation_test.json", {{"u", r.test.u},
                                              {"p_value", r.test.p_value},
                                              {"alpha", r.alpha},
                                              {"variance_smaller", r.variance_smaller()}});
      std::cout << "rank test U = " << format_number(r.test.u)
                << ", p = " << format_number(r.test.p_value)
                << (r.variance_smaller() ? " (adaptive variance smaller)" : " (not significant)")
                << "\n";
      return 0;
    }

    if (*run_all) {
      const ExperimentConfig ec = load_config(all_c, all_env);
      const ExperimentResult r = run_experiment(ec);
      std::cout << "build: " << r.build.status << ", " << r.real_build_steps
                << " real evaluations\n";
      print_eval(r.evaluation);
      if (r.robustness) {
        std::cout << "robust environments: " << r.robustness->successes() << " / "
                  << r.robustness->combined.runs() << "\n";
      }
      std::cout << "real evaluation steps: " << r.real_eval_steps << "\n";
      for (const auto& a : r.assertions) {
        std::cout << (a.passed ? "PASS " : "FAIL ") << a.name << ": " << a.detail << "\n";
      }
      return r.all_assertions_passed() ? 0 : 1;
    }
  } catch (const StageError& e) {
    std::cerr << "error in stage '" << e.stage() << "': " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
