#pragma once

// Ground-truth benchmark systems: torque-limited pendulum swing-up and
// cart-pole balancing. Both expose set-state single-step probing so a model
// builder can query arbitrary transitions.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "aur/design.hpp"
#include "aur/errors.hpp"
#include "aur/rng.hpp"

namespace aur {

enum class ActionType { kContinuous, kDiscrete };

/// Static description of an environment's spaces and episode structure.
struct EnvSpec {
  std::string name;
  Index state_dim = 0;
  Index action_dim = 0;
  ActionType action_type = ActionType::kContinuous;
  // Discrete only: the force/torque value of each option, per action dimension.
  std::vector<std::vector<double>> action_options;
  SpaceBounds bounds;  // state dims followed by action dims
  int horizon = 200;
  double dt = 0.05;
  // (cos, sin) observation index pairs that must stay on the unit circle.
  std::vector<std::pair<Index, Index>> angle_pairs;
  // Success box on observations; empty means the task never terminates early.
  std::optional<std::pair<Vec, Vec>> success_box;

  Index input_dim() const { return state_dim + action_dim; }
  SpaceBounds state_bounds() const { return bounds.slice(0, state_dim); }
  SpaceBounds action_bounds() const { return bounds.slice(state_dim, action_dim); }

  bool in_success_box(const Vec& obs) const {
    if (!success_box) return true;
    return (obs.array() >= success_box->first.array()).all() &&
           (obs.array() <= success_box->second.array()).all();
  }

  // Projects angle pairs onto the unit circle and clips to the state bounds.
  Vec canonical_state(Vec s) const {
    for (const auto& [ci, si] : angle_pairs) {
      const double r = std::hypot(s[ci], s[si]);
      if (r > 0.0) {
        s[ci] /= r;
        s[si] /= r;
      } else {
        s[ci] = 1.0;
        s[si] = 0.0;
      }
    }
    return state_bounds().clip(s);
  }

  // Continuous actions are clipped; discrete ones snap to the nearest option.
  Vec canonical_action(const Vec& a) const {
    Vec out = action_bounds().clip(a);
    if (action_type == ActionType::kDiscrete) {
      for (Index j = 0; j < action_dim; ++j) {
        const auto& opts = action_options[static_cast<std::size_t>(j)];
        out[j] = *std::min_element(opts.begin(), opts.end(), [&](double x, double y) {
          return std::abs(x - a[j]) < std::abs(y - a[j]);
        });
      }
    }
    return out;
  }

  void validate() const {
    if (horizon < 1) throw InvalidInput("EnvSpec: horizon must be >= 1");
    if (!(dt > 0.0)) throw InvalidInput("EnvSpec: dt must be > 0");
    if (bounds.size() != input_dim()) throw InvalidInput("EnvSpec: bounds dimension mismatch");
  }
};

struct StepResult {
  Vec observation;
  double reward = 0.0;
  bool done = false;
};

inline double angle_normalize(double x) {
  return std::remainder(x, 2.0 * std::numbers::pi);
}

/// Quadratic swing-up loss with zero targets; the pendulum reward is its negative.
inline double pendulum_loss(double theta, double theta_dot, double action) {
  const double th = angle_normalize(theta);
  return th * th + 0.1 * theta_dot * theta_dot + 0.001 * action * action;
}

inline constexpr double kCartPoleThetaLimit = 12.0 * 2.0 * std::numbers::pi / 360.0;
inline constexpr double kCartPoleXLimit = 2.4;

/// 1 while the cart-pole has stayed inside its limits; failure is absorbing.
inline int cartpole_success(const Vec& state, int prev_success) {
  if (prev_success == 0) return 0;
  if (std::abs(state[0]) > kCartPoleXLimit || std::abs(state[2]) > kCartPoleThetaLimit) return 0;
  return 1;
}

struct PendulumParams {
  double mass = 1.0;
  double length = 1.0;
  double gravity = 10.0;
  double max_torque = 2.0;
  double max_speed = 8.0;
  double dt = 0.05;
  int horizon = 200;
  double reset_speed = 1.0;  // theta_dot ~ U(-reset_speed, reset_speed)
};

class Pendulum {
 public:
  explicit Pendulum(PendulumParams p = {}) : p_(p) {}

  const PendulumParams& params() const { return p_; }

  EnvSpec spec() const {
    EnvSpec s;
    s.name = "pendulum";
    s.state_dim = 3;
    s.action_dim = 1;
    s.action_type = ActionType::kContinuous;
    s.bounds = SpaceBounds({{-1.0, 1.0}, {-1.0, 1.0}, {-8.0, 8.0}, {-2.0, 2.0}});
    s.horizon = p_.horizon;
    s.dt = p_.dt;
    s.angle_pairs = {{0, 1}};
    return s;
  }

  Vec reset(Rng& rng) {
    theta_ = rng.uniform(-std::numbers::pi, std::numbers::pi);
    theta_dot_ = rng.uniform(-p_.reset_speed, p_.reset_speed);
    t_ = 0;
    return observe();
  }

  void set_state(const Vec& obs) {
    if (obs.size() != 3 || !obs.allFinite()) throw ProbeError("pendulum: bad state");
    theta_ = std::atan2(obs[1], obs[0]);
    theta_dot_ = std::clamp(obs[2], -p_.max_speed, p_.max_speed);
    t_ = 0;
  }

  void set_physical_state(double theta, double theta_dot) {
    theta_ = theta;
    theta_dot_ = theta_dot;
    t_ = 0;
  }

  Vec observe() const { return Vec{{std::cos(theta_), std::sin(theta_), theta_dot_}}; }
  double theta() const { return angle_normalize(theta_); }
  double theta_dot() const { return theta_dot_; }

  StepResult step(const Vec& action) {
    if (!std::isfinite(theta_) || !std::isfinite(theta_dot_) || !action.allFinite()) {
      throw FaultError("pendulum: non-finite state or action");
    }
    const double u = std::clamp(action[0], -p_.max_torque, p_.max_torque);
    const double reward = -pendulum_loss(theta_, theta_dot_, u);
    const double acc = 3.0 * p_.gravity / (2.0 * p_.length) * std::sin(theta_) +
                       3.0 / (p_.mass * p_.length * p_.length) * u;
    theta_dot_ = std::clamp(theta_dot_ + acc * p_.dt, -p_.max_speed, p_.max_speed);
    theta_ += theta_dot_ * p_.dt;
    ++t_;
    return {observe(), reward, t_ >= p_.horizon};
  }

  // Torque and speed limits scaled by (1 + noise_scale z), z ~ N(0, 1).
  Pendulum perturbed(double noise_scale, Rng& rng) const {
    if (noise_scale < 0.0) throw InvalidInput("perturb: noise_scale must be >= 0");
    PendulumParams q = p_;
    q.max_torque = perturb_value(q.max_torque, noise_scale, rng);
    q.max_speed = perturb_value(q.max_speed, noise_scale, rng);
    return Pendulum(q);
  }

  static double perturb_value(double v, double scale, Rng& rng) {
    return std::max(v * (1.0 + scale * rng.normal()), 1e-6 * v);
  }

 private:
  PendulumParams p_;
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
  int t_ = 0;
};

struct CartPoleParams {
  double gravity = 9.8;
  double mass_cart = 1.0;
  double mass_pole = 0.1;
  double half_length = 0.5;
  double force_mag = 10.0;
  double dt = 0.02;
  int horizon = 200;
  double reset_half_width = 0.05;  // each state ~ U(-w, w)
};

class CartPole {
 public:
  explicit CartPole(CartPoleParams p = {}) : p_(p) {}

  const CartPoleParams& params() const { return p_; }

  EnvSpec spec() const {
    const double th = 24.0 * 2.0 * std::numbers::pi / 360.0;
    EnvSpec s;
    s.name = "cartpole";
    s.state_dim = 4;
    s.action_dim = 1;
    s.action_type = ActionType::kDiscrete;
    s.action_options = {{-p_.force_mag, p_.force_mag}};
    s.bounds = SpaceBounds(
        {{-4.8, 4.8}, {-5.0, 5.0}, {-th, th}, {-5.0, 5.0}, {-p_.force_mag, p_.force_mag}});
    s.horizon = p_.horizon;
    s.dt = p_.dt;
    constexpr double inf = std::numeric_limits<double>::infinity();
    s.success_box = std::make_pair(Vec{{-kCartPoleXLimit, -inf, -kCartPoleThetaLimit, -inf}},
                                   Vec{{kCartPoleXLimit, inf, kCartPoleThetaLimit, inf}});
    return s;
  }

  Vec reset(Rng& rng) {
    for (Index i = 0; i < 4; ++i) state_[i] = rng.uniform(-p_.reset_half_width, p_.reset_half_width);
    success_ = 1;
    t_ = 0;
    return state_;
  }

  void set_state(const Vec& obs) {
    if (obs.size() != 4 || !obs.allFinite()) throw ProbeError("cartpole: bad state");
    state_ = obs;
    success_ = 1;
    t_ = 0;
  }

  Vec observe() const { return state_; }
  int success() const { return success_; }

  StepResult step(const Vec& action) {
    if (!state_.allFinite() || !action.allFinite()) {
      throw FaultError("cartpole: non-finite state or action");
    }
    const double force = action[0] >= 0.0 ? p_.force_mag : -p_.force_mag;
    const double x_dot = state_[1];
    const double theta = state_[2];
    const double theta_dot = state_[3];
    const double total_mass = p_.mass_cart + p_.mass_pole;
    const double pml = p_.mass_pole * p_.half_length;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double temp = (force + pml * theta_dot * theta_dot * s) / total_mass;
    const double theta_acc =
        (p_.gravity * s - c * temp) /
        (p_.half_length * (4.0 / 3.0 - p_.mass_pole * c * c / total_mass));
    const double x_acc = temp - pml * theta_acc * c / total_mass;
    state_[0] += p_.dt * x_dot;
    state_[1] += p_.dt * x_acc;
    state_[2] += p_.dt * theta_dot;
    state_[3] += p_.dt * theta_acc;
    ++t_;
    success_ = cartpole_success(state_, success_);
    return {state_, static_cast<double>(success_), success_ == 0 || t_ >= p_.horizon};
  }

  // Pole and cart masses scaled by (1 + noise_scale z), z ~ N(0, 1).
  CartPole perturbed(double noise_scale, Rng& rng) const {
    if (noise_scale < 0.0) throw InvalidInput("perturb: noise_scale must be >= 0");
    CartPoleParams q = p_;
    q.mass_pole = Pendulum::perturb_value(q.mass_pole, noise_scale, rng);
    q.mass_cart = Pendulum::perturb_value(q.mass_cart, noise_scale, rng);
    return CartPole(q);
  }

 private:
  CartPoleParams p_;
  Vec state_ = Vec::Zero(4);
  int success_ = 1;
  int t_ = 0;
};

/// Value-semantic handle over the benchmark environments.
class Environment {
 public:
  using Variant = std::variant<Pendulum, CartPole>;

  Environment(Pendulum p) : env_(std::move(p)) {}  // NOLINT(google-explicit-constructor)
  Environment(CartPole c) : env_(std::move(c)) {}  // NOLINT(google-explicit-constructor)

  EnvSpec spec() const {
    return std::visit([](const auto& e) { return e.spec(); }, env_);
  }
  std::string name() const { return spec().name; }
  Vec reset(Rng& rng) {
    return std::visit([&](auto& e) { return e.reset(rng); }, env_);
  }
  void set_state(const Vec& obs) {
    std::visit([&](auto& e) { e.set_state(obs); }, env_);
  }
  Vec observe() const {
    return std::visit([](const auto& e) { return e.observe(); }, env_);
  }
  StepResult step(const Vec& action) {
    return std::visit([&](auto& e) { return e.step(action); }, env_);
  }
  Environment perturbed(double noise_scale, Rng& rng) const {
    return std::visit([&](const auto& e) { return Environment(e.perturbed(noise_scale, rng)); },
                      env_);
  }

  const Variant& variant() const { return env_; }
  Variant& variant() { return env_; }

 private:
  Variant env_;
};

/// Registry lookup. `reset_scale` widens the reset distribution: it multiplies
/// the cart-pole half-width and the pendulum reset speed.
inline Environment make_environment(const std::string& name, double reset_scale = 1.0) {
  if (name == "pendulum") {
    PendulumParams p;
    p.reset_speed *= reset_scale;
    return Pendulum(p);
  }
  if (name == "cartpole") {
    CartPoleParams p;
    p.reset_half_width *= reset_scale;
    return CartPole(p);
  }
  throw InvalidInput("unknown environment '" + name + "' (expected pendulum or cartpole)");
}

inline std::vector<std::string> environment_names() { return {"pendulum", "cartpole"}; }

}  // namespace aur
