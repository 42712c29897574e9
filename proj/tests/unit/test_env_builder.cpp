#include <gtest/gtest.h>

#include <cmath>

#include "aur/env_builder.hpp"

using namespace aur;

namespace {

BuildConfig cheap(const std::string& env, int budget) {
  BuildConfig c;
  c.env = env;
  c.initial_samples = 20;
  c.budget = budget;
  c.mc_samples = 150;
  c.fit.restarts = 1;
  c.fit.iterations = 30;
  c.refit_iterations = 20;
  c.seed = 4;
  return c;
}

}  // namespace

TEST(ProbeReal, MatchesDirectStep) {
  Environment env = make_environment("pendulum");
  const Vec x{{0.0, 1.0, 0.5, 1.2}};
  const ProbeResult p = probe_real(env, x);
  Environment ref = make_environment("pendulum");
  ref.set_state(x.head(3));
  const StepResult s = ref.step(x.tail(1));
  EXPECT_EQ(p.delta, s.observation - x.head(3));
  EXPECT_DOUBLE_EQ(p.reward, s.reward);
}

TEST(ProbeReal, RejectsOutOfBoundsAndNonFinite) {
  Environment env = make_environment("cartpole");
  EXPECT_THROW(probe_real(env, Vec{{0.0, 0.0, 0.0, 0.0, 50.0}}), ProbeError);
  EXPECT_THROW(probe_real(env, Vec{{std::nan(""), 0.0, 0.0, 0.0, 10.0}}), ProbeError);
  EXPECT_THROW(probe_real(env, Vec::Zero(3)), ProbeError);
}

TEST(BuildConfig, RejectsBadValues) {
  const EnvSpec spec = make_environment("pendulum").spec();
  BuildConfig c;
  c.target_ci = 1.0;
  EXPECT_THROW(c.validate(spec), InvalidInput);
  c = BuildConfig{};
  c.budget = 10;
  EXPECT_THROW(c.validate(spec), InvalidInput);
  c = BuildConfig{};
  c.mc_samples = 1;
  EXPECT_THROW(c.validate(spec), InvalidInput);
  EXPECT_EQ(BuildConfig{}.resolved_initial(spec), 40);
}

TEST(Build, NeverExceedsBudgetAndLogsEveryPass) {
  for (const auto& env : environment_names()) {
    BuildSession s(make_environment(env), cheap(env, 28));
    s.run();
    const BuildReport& r = s.report();
    EXPECT_LE(r.real_evaluations, 28);
    EXPECT_EQ(s.data().size(), r.real_evaluations);
    EXPECT_NE(r.status, "running");
    const CsvTable t = build_log_table(r, s.spec().state_dim);
    EXPECT_EQ(t.rows.size(), r.iterations.size());
    int probes = 0;
    for (const auto& it : r.iterations) probes += it.new_samples;
    EXPECT_EQ(probes + r.initial_samples, r.real_evaluations);
    for (const auto& it : r.iterations) {
      for (double c : it.ci) {
        EXPECT_GE(c, 0.0);
        EXPECT_LE(c, 1.0);
      }
    }
  }
}

TEST(Build, FixedBudgetSpendsExactlyTheBudget) {
  BuildConfig c = cheap("pendulum", 27);
  c.fixed_budget = true;
  BuildSession s(make_environment("pendulum"), c);
  s.run();
  EXPECT_EQ(s.report().real_evaluations, 27);
  EXPECT_EQ(s.report().status, "fixed_budget");
}

TEST(Build, ResumeReproducesTheUninterruptedRun) {
  const BuildConfig c = cheap("cartpole", 45);
  BuildSession full(make_environment("cartpole"), c);
  full.run();

  BuildSession part(make_environment("cartpole"), c);
  part.run(2);
  const nlohmann::json saved = nlohmann::json::parse(part.state().dump());
  BuildSession resumed = BuildSession::resume(make_environment("cartpole"), saved);
  resumed.run();

  const Index in = full.spec().input_dim();
  EXPECT_EQ(sample_log_table(resumed.report(), in).rows, sample_log_table(full.report(), in).rows);
  EXPECT_EQ(build_log_table(resumed.report(), 4).rows, build_log_table(full.report(), 4).rows);
  EXPECT_EQ(resumed.data().inputs, full.data().inputs);
}

TEST(Build, AdaptiveSamplesComeFromTheLog) {
  BuildConfig c = cheap("pendulum", 26);
  c.fixed_budget = true;
  BuildSession s(make_environment("pendulum"), c);
  s.run();
  for (const auto& rec : s.report().samples) {
    ASSERT_GE(rec.evaluation, 1);
    EXPECT_EQ(rec.input, s.data().inputs.row(rec.evaluation - 1).transpose());
    EXPECT_GT(rec.evaluation, s.report().initial_samples);
    if (!rec.degenerate) EXPECT_TRUE(std::isfinite(rec.log_u));
  }
}

TEST(OneStepRmse, ZeroForAnInterpolatingModelAndFiniteOtherwise) {
  Rng rng(2);
  const Dataset d = heldout_transitions(make_environment("cartpole"), 30, rng);
  std::vector<GPModel> exact;
  GPHyperparams h;
  h.length_scales = Vec::Constant(d.input_dim(), 0.05);
  h.signal_variance = 1.0;
  h.noise_variance = 0.0;
  for (Index g = 0; g < d.target_count(); ++g) {
    exact.push_back(GPModel::from_parts(Normalization::fit(d.inputs, d.target(g)), h, d.inputs,
                                        d.target(g)));
  }
  for (double e : one_step_rmse(exact, d)) EXPECT_LT(e, 1e-4);
  const Dataset other = heldout_transitions(make_environment("cartpole"), 30, rng);
  for (double e : one_step_rmse(exact, other)) {
    EXPECT_TRUE(std::isfinite(e));
    EXPECT_GE(e, 0.0);
  }
}
