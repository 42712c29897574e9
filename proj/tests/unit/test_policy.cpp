#include <gtest/gtest.h>

#include <cmath>

#include "aur/policy.hpp"

using namespace aur;

namespace {

template <typename F>
Vec finite_difference(const PolicyParams& p, F f) {
  const Vec base = p.flat();
  Vec g(base.size());
  for (Index i = 0; i < base.size(); ++i) {
    PolicyParams a = p, b = p;
    Vec pa = base, pb = base;
    const double eps = 1e-6;
    pa[i] += eps;
    pb[i] -= eps;
    a.set_flat(pa);
    b.set_flat(pb);
    g[i] = (f(a) - f(b)) / (2 * eps);
  }
  return g;
}

void expect_close(const Vec& analytic, const Vec& fd) {
  ASSERT_EQ(analytic.size(), fd.size());
  for (Index i = 0; i < fd.size(); ++i) {
    EXPECT_NEAR(analytic[i], fd[i], 1e-4 * std::max(1.0, std::abs(fd[i]))) << "param " << i;
  }
}

EnvSpec pendulum_spec() { return make_environment("pendulum").spec(); }
EnvSpec cartpole_spec() { return make_environment("cartpole").spec(); }

}  // namespace

TEST(Policy, ContinuousLogProbGradientMatchesFiniteDifferences) {
  Rng rng(0);
  PolicyOptions o;
  o.hidden = 8;
  const PolicyParams p = make_policy(pendulum_spec(), o, rng);
  for (int k = 0; k < 3; ++k) {
    const Vec s{{std::cos(0.3 * k), std::sin(0.3 * k), 1.0 - k}};
    const Vec raw = Vec::Constant(1, 1.7 - 1.2 * k);
    const auto r = log_prob_and_grad(p, s, raw);
    expect_close(r.gradient, finite_difference(p, [&](const PolicyParams& q) {
                   return log_prob_and_grad(q, s, raw).log_prob;
                 }));
  }
}

TEST(Policy, DiscreteLogProbAndEntropyGradientsMatchFiniteDifferences) {
  Rng rng(1);
  PolicyOptions o;
  o.hidden = 8;
  for (const auto& [spec, disc] : {std::pair{cartpole_spec(), 0}, std::pair{pendulum_spec(), 5}}) {
    o.discretize = disc;
    const PolicyParams p = make_policy(spec, o, rng);
    Vec s = Vec::Zero(spec.state_dim);
    for (Index i = 0; i < s.size(); ++i) s[i] = 0.03 * static_cast<double>(i + 1);
    const Vec raw = Vec::Constant(1, 1.0);
    expect_close(log_prob_and_grad(p, s, raw).gradient,
                 finite_difference(p, [&](const PolicyParams& q) {
                   return log_prob_and_grad(q, s, raw).log_prob;
                 }));
    expect_close(entropy_and_grad(p, s).gradient, finite_difference(p, [&](const PolicyParams& q) {
                   return entropy_and_grad(q, s).entropy;
                 }));
  }
}

TEST(Policy, ContinuousEntropyGradient) {
  Rng rng(2);
  const PolicyParams p = make_policy(pendulum_spec(), {}, rng);
  const Vec s{{1.0, 0.0, 0.0}};
  expect_close(entropy_and_grad(p, s).gradient, finite_difference(p, [&](const PolicyParams& q) {
                 return entropy_and_grad(q, s).entropy;
               }));
}

TEST(ValueFunction, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  const ValueFunction v = ValueFunction::make(cartpole_spec(), 8, rng);
  const Vec s{{0.1, -0.2, 0.05, 0.3}};
  const auto [val, grad] = v.value_and_grad(s);
  EXPECT_DOUBLE_EQ(val, v.value(s));
  const Vec base = v.net.flat();
  for (Index i = 0; i < base.size(); ++i) {
    ValueFunction a = v, b = v;
    Vec pa = base, pb = base;
    pa[i] += 1e-6;
    pb[i] -= 1e-6;
    a.net.set_flat(pa);
    b.net.set_flat(pb);
    const double fd = (a.value(s) - b.value(s)) / 2e-6;
    EXPECT_NEAR(grad[i], fd, 1e-4 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Policy, SoftmaxGroupsNormalize) {
  Rng rng(4);
  PolicyOptions o;
  o.discretize = 7;
  const PolicyParams p = make_policy(pendulum_spec(), o, rng);
  for (int k = 0; k < 50; ++k) {
    const Vec s{{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-8, 8)}};
    for (const Vec& g : forward_discrete(p, s)) {
      EXPECT_NEAR(g.sum(), 1.0, 1e-12);
      EXPECT_TRUE((g.array() >= 0.0).all());
    }
  }
  const Vec big{{1000.0, -1000.0, 0.0}};
  EXPECT_NEAR(detail::group_softmax(big).sum(), 1.0, 1e-12);
}

TEST(Policy, DiscretizationGrid) {
  const SpaceBounds b = SpaceBounds::uniform(Vec::Constant(1, -2.0), Vec::Constant(1, 2.0));
  const auto t = discretize_action_space(b, 5);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0], (std::vector<double>{-2.0, -1.0, 0.0, 1.0, 2.0}));
  EXPECT_THROW(discretize_action_space(b, 1), InvalidInput);
}

TEST(Policy, ZeroWeightsGiveZeroAction) {
  Rng rng(5);
  PolicyParams p = make_policy(pendulum_spec(), {}, rng);
  Vec flat = p.flat();
  flat.head(p.net.param_count()).setZero();
  p.set_flat(flat);
  EXPECT_DOUBLE_EQ(deterministic_action(p, Vec{{0.3, 0.9, 2.0}})[0], 0.0);
}

TEST(Policy, ContinuousActionsStayInsideLimits) {
  Rng rng(6);
  const PolicyParams p = make_policy(pendulum_spec(), {}, rng);
  for (int k = 0; k < 500; ++k) {
    const Vec s{{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-8, 8)}};
    const SampledAction a = sample_action(p, s, rng);
    EXPECT_LE(std::abs(a.env_action[0]), 2.0);
    EXPECT_DOUBLE_EQ(a.log_prob, log_prob_and_grad(p, s, a.raw).log_prob);
  }
}

TEST(Policy, DiscreteDeterministicActionIsArgmax) {
  Rng rng(7);
  const PolicyParams p = make_policy(cartpole_spec(), {}, rng);
  const Vec s{{0.01, 0.0, -0.03, 0.2}};
  const Vec probs = forward_discrete(p, s)[0];
  EXPECT_DOUBLE_EQ(deterministic_action(p, s)[0], probs[1] > probs[0] ? 10.0 : -10.0);
}

TEST(Policy, JsonRoundTripAndValidation) {
  Rng rng(8);
  for (int disc : {0, 3}) {
    PolicyOptions o;
    o.discretize = disc;
    const PolicyParams p = make_policy(pendulum_spec(), o, rng);
    const PolicyParams r = policy_from_json(nlohmann::json::parse(to_json(p).dump()));
    EXPECT_EQ(r.flat(), p.flat());
    EXPECT_EQ(r.env, "pendulum");
    const Vec s{{0.0, 1.0, 0.5}};
    EXPECT_EQ(deterministic_action(r, s), deterministic_action(p, s));
  }
  nlohmann::json j = to_json(make_policy(pendulum_spec(), {}, rng));
  j["u_max"] = {-1.0};
  EXPECT_THROW(policy_from_json(j), InvalidInput);
  j.erase("net");
  EXPECT_THROW(policy_from_json(j), FormatError);
}
