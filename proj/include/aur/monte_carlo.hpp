#pragma once

// Monte-Carlo state-action sets harvested from virtual rollouts. These are
// both the candidate pool for adaptive sampling and the evaluation set for
// the confidence index.

#include <optional>
#include <string>

#include "aur/policy.hpp"
#include "aur/virtual_env.hpp"

namespace aur {

enum class McMode { kRollout, kUniform };

inline std::string to_string(McMode m) { return m == McMode::kRollout ? "rollout" : "uniform"; }

inline McMode mc_mode_from_string(const std::string& s) {
  if (s == "rollout") return McMode::kRollout;
  if (s == "uniform") return McMode::kUniform;
  throw InvalidInput("unknown MC mode '" + s + "' (expected rollout or uniform)");
}

/// Uniformly random action: continuous box draw or a uniformly chosen option.
inline Vec random_action(const EnvSpec& spec, Rng& rng) {
  Vec a(spec.action_dim);
  const SpaceBounds ab = spec.action_bounds();
  for (Index j = 0; j < spec.action_dim; ++j) {
    if (spec.action_type == ActionType::kDiscrete) {
      const auto& opts = spec.action_options[static_cast<std::size_t>(j)];
      a[j] = opts[rng.index(opts.size())];
    } else {
      const auto& d = ab.dims[static_cast<std::size_t>(j)];
      a[j] = rng.uniform(d.lower, d.upper);
    }
  }
  return a;
}

/// n rows of [state, action]. Rollout mode runs AUR-D episodes from the reset
/// distribution (restarting at the horizon or when a state leaves the
/// task's success box); uniform mode draws states uniformly from the bounds.
inline Mat generate_mc_samples(const VirtualEnv& venv, const PolicyParams* policy, Index n,
                               int horizon, Rng& rng, McMode mode = McMode::kRollout) {
  if (n < 1) throw InvalidInput("generate_mc_samples: n must be >= 1");
  if (horizon < 1) throw InvalidInput("generate_mc_samples: horizon must be >= 1");
  const EnvSpec& spec = venv.spec();
  Mat out(n, spec.input_dim());
  auto act = [&](const Vec& s) {
    return policy ? sample_action(*policy, s, rng).env_action : random_action(spec, rng);
  };
  if (mode == McMode::kUniform) {
    const SpaceBounds sb = spec.state_bounds();
    for (Index i = 0; i < n; ++i) {
      Vec s(spec.state_dim);
      for (Index j = 0; j < spec.state_dim; ++j) {
        const auto& d = sb.dims[static_cast<std::size_t>(j)];
        s[j] = rng.uniform(d.lower, d.upper);
      }
      s = spec.canonical_state(s);
      out.row(i) = join(s, spec.canonical_action(act(s))).transpose();
    }
    return out;
  }
  Vec s = vreset(venv, rng);
  int t = 0;
  for (Index i = 0; i < n; ++i) {
    const Vec a = spec.canonical_action(act(s));
    out.row(i) = join(s, a).transpose();
    s = predict_next_state(venv, join(s, a));
    if (++t >= horizon || !spec.in_success_box(s)) {
      s = vreset(venv, rng);
      t = 0;
    }
  }
  return out;
}

}  // namespace aur
