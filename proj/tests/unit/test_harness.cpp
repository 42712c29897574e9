#include <gtest/gtest.h>

#include <filesystem>

#include "aur/harness.hpp"

using namespace aur;
namespace fs = std::filesystem;

namespace {

nlohmann::json small_config(const fs::path& out) {
  return {{"version", 1},
          {"env", "cartpole"},
          {"seed", 3},
          {"output_dir", out.string()},
          {"build", {{"initial_samples", 20}, {"budget", 30}, {"mc_samples", 100},
                     {"fit_restarts", 1}, {"fit_iterations", 30}}},
          {"train", {{"total_steps", 600}, {"steps_per_batch", 300}, {"hidden", 8}}},
          {"evaluation", {{"runs", 2}, {"trials", 3}}},
          {"robustness", {{"envs", 2}, {"trials", 2}}},
          {"assertions", {{"max_real_evaluations", 30}, {"min_success_rate", 1.1}}}};
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("aur_harness_" + name);
  fs::remove_all(p);
  return p;
}

PolicyParams some_policy(const std::string& env, std::uint64_t seed) {
  Rng rng(seed);
  return make_policy(make_environment(env).spec(), {}, rng);
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
  const ExperimentConfig c = experiment_config_from_json(small_config("/tmp/x"));
  EXPECT_EQ(c.env, "cartpole");
  EXPECT_EQ(c.build.env, "cartpole");
  EXPECT_EQ(c.build.seed, 3u);
  EXPECT_EQ(c.train.seed, 3u);
  EXPECT_EQ(c.build.budget, 30);
  EXPECT_EQ(c.evaluation.trials, 3);
  EXPECT_EQ(c.assertions.max_real_evaluations, 30);
  EXPECT_FALSE(c.assertions.min_robust_successes.has_value());
  const ExperimentConfig p = experiment_config_from_json({{"env", "pendulum"}});
  EXPECT_DOUBLE_EQ(p.train.gamma, default_train_config("pendulum").gamma);
}

TEST(Config, RejectsUnknownKeysWrongVersionsAndBadValues) {
  for (const auto& path : {"/extra", "/build/extra", "/train/extra", "/evaluation/extra",
                           "/robustness/extra", "/ablation/extra", "/assertions/extra"}) {
    nlohmann::json j = small_config("/tmp/x");
    if (!j.contains(nlohmann::json::json_pointer(path).parent_pointer())) {
      j[nlohmann::json::json_pointer(path).parent_pointer()] = nlohmann::json::object();
    }
    j[nlohmann::json::json_pointer(path)] = 1;
    EXPECT_THROW(experiment_config_from_json(j), FormatError) << path;
  }
  nlohmann::json v = small_config("/tmp/x");
  v["version"] = 2;
  EXPECT_THROW(experiment_config_from_json(v), FormatError);
  v = small_config("/tmp/x");
  v["train"]["version"] = 7;
  EXPECT_THROW(experiment_config_from_json(v), FormatError);
  v = small_config("/tmp/x");
  v["build"]["budget"] = "many";
  EXPECT_THROW(experiment_config_from_json(v), FormatError);
  v = small_config("/tmp/x");
  v["evaluation"]["trials"] = 0;
  EXPECT_THROW(experiment_config_from_json(v), InvalidInput);
  v = small_config("/tmp/x");
  v["env"] = "acrobot";
  EXPECT_THROW(experiment_config_from_json(v), InvalidInput);
}

TEST(Evaluation, EmptyReportExportsHeaderOnly) {
  const fs::path dir = temp_dir("empty");
  EvalReport r;
  r.env = "cartpole";
  export_report(r, dir / "evaluation");
  const CsvTable t = read_csv(dir / "evaluation.csv");
  EXPECT_EQ(t.header.size(), 6u);
  EXPECT_TRUE(t.rows.empty());
  const nlohmann::json s = read_json(dir / "evaluation.summary.json");
  EXPECT_EQ(s["episodes"], 0);
  EXPECT_TRUE(s["median_settle_step"].is_null());
}

TEST(Evaluation, CsvRoundTripPreservesStatistics) {
  const Environment env = make_environment("pendulum");
  Rng rng(1);
  const EvalReport r = evaluate_policy(env, some_policy("pendulum", 2), 2, 4, rng);
  ASSERT_EQ(r.episodes.size(), 8u);
  const fs::path dir = temp_dir("roundtrip");
  export_report(r, dir / "evaluation");
  const EvalReport back = episodes_from_table(read_csv(dir / "evaluation.csv"), "pendulum");
  EXPECT_EQ(summary_json(back), summary_json(r));
  EXPECT_EQ(back.run_mean_returns(), r.run_mean_returns());
}

TEST(Evaluation, AggregatesFromHandMadeEpisodes) {
  EvalReport r;
  r.env = "cartpole";
  r.episodes = {{0, 0, 200, 200, true, -1}, {0, 1, 190, 190, false, -1},
                {1, 0, 50, 50, false, -1},  {1, 1, 200, 200, true, -1}};
  EXPECT_EQ(r.runs(), 2);
  EXPECT_EQ(r.run_mean_lengths(), (std::vector<double>{195.0, 125.0}));
  EXPECT_DOUBLE_EQ(r.solved_run_fraction(), 0.5);
  EXPECT_DOUBLE_EQ(r.success_rate(), 0.5);
  EXPECT_DOUBLE_EQ(r.converged_fraction(), 0.5);
  EXPECT_TRUE(std::isnan(r.median_settle_step()));
  r.env = "pendulum";
  r.episodes[0].settle_step = 40;
  r.episodes[3].settle_step = 60;
  EXPECT_DOUBLE_EQ(r.median_settle_step(), 50.0);
  EXPECT_DOUBLE_EQ(r.success_rate(), 0.5);
}

TEST(Evaluation, PendulumConvergenceNeedsTwentyUprightSteps) {
  EXPECT_TRUE(pendulum_upright(Vec{{1.0, 0.0, 0.0}}));
  EXPECT_FALSE(pendulum_upright(Vec{{std::cos(0.3), std::sin(0.3), 0.0}}));
  EXPECT_FALSE(pendulum_upright(Vec{{1.0, 0.0, 1.5}}));
  // A zero-torque pendulum resting upright stays there for the whole episode.
  Environment env = make_environment("pendulum");
  env.set_state(Vec{{1.0, 0.0, 0.0}});
  PolicyParams p = some_policy("pendulum", 0);
  Vec flat = p.flat();
  flat.head(p.net.param_count()).setZero();
  p.set_flat(flat);
  const EpisodeRecord e = run_episode(env, p, env.observe());
  EXPECT_TRUE(e.converged);
  EXPECT_EQ(e.settle_step, 0);
  EXPECT_EQ(e.length, 200);
}

TEST(Robustness, ZeroPerturbationMatchesPlainEvaluation) {
  const Environment real = make_environment("cartpole");
  const PolicyParams p = some_policy("cartpole", 5);
  Rng rng(7);
  const RobustnessReport r = robustness_study(real, p, 0.0, 3, 4, rng);
  ASSERT_EQ(r.combined.runs(), 3);
  for (int k = 0; k < 3; ++k) {
    Rng erng = Rng(7).split(2 * static_cast<std::uint64_t>(k) + 2);
    const EvalReport plain = evaluate_policy(real, p, 1, 4, erng);
    for (int i = 0; i < 4; ++i) {
      const auto& a = r.combined.episodes[static_cast<std::size_t>(4 * k + i)];
      EXPECT_EQ(a.length, plain.episodes[static_cast<std::size_t>(i)].length);
      EXPECT_DOUBLE_EQ(a.ret, plain.episodes[static_cast<std::size_t>(i)].ret);
    }
    EXPECT_EQ(r.parameters[static_cast<std::size_t>(k)], physical_parameters(real));
  }
}

TEST(Robustness, PendulumSharesOneStartState) {
  Rng rng(2);
  const RobustnessReport r =
      robustness_study(make_environment("pendulum"), some_policy("pendulum", 1), 0.1, 4, 100, rng);
  ASSERT_TRUE(r.start_state.has_value());
  EXPECT_EQ(r.combined.episodes.size(), 4u);
  EXPECT_EQ(r.parameters.size(), 4u);
  EXPECT_NE(r.parameters[0], r.parameters[1]);
}

TEST(Pipeline, WritesArtifactsEvaluatesAssertionsAndIsDeterministic) {
  const fs::path a = temp_dir("run_a");
  const fs::path b = temp_dir("run_b");
  const ExperimentResult ra = run_experiment(experiment_config_from_json(small_config(a)));
  const ExperimentResult rb = run_experiment(experiment_config_from_json(small_config(b)));

  for (const char* f : {"venv.json", "build_log.csv", "sample_log.csv", "build_summary.json",
                        "timing.json", "policy.json", "value.json", "learning_curve.csv",
                        "evaluation.csv", "evaluation.summary.json", "evaluation.summary.txt",
                        "trace_real.csv", "trace_real_vs_virtual.csv", "robustness.csv",
                        "robustness_parameters.json", "summary.json"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    if (std::string(f) != "timing.json") {
      EXPECT_EQ(read_text(a / f), read_text(b / f)) << f;
    }
  }
  EXPECT_EQ(read_csv(a / "build_log.csv").rows.size(), ra.build.iterations.size());
  EXPECT_EQ(read_csv(a / "evaluation.csv").rows.size(), 6u);
  EXPECT_EQ(ra.real_build_steps, rb.real_build_steps);

  ASSERT_EQ(ra.assertions.size(), 2u);
  EXPECT_TRUE(ra.assertions[0].passed);
  EXPECT_FALSE(ra.assertions[1].passed);  // a success rate above 1 is unreachable
  EXPECT_FALSE(ra.all_assertions_passed());
  EXPECT_FALSE(read_json(a / "summary.json")["passed"].get<bool>());
}

TEST(Pipeline, StageErrorsNameTheStage) {
  try {
    run_stage("evaluate", []() -> int { throw InvalidInput("boom"); });
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "evaluate");
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
  }
}
