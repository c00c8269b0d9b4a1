#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "smoothrl/rng.hpp"
#include "smoothrl/tensor.hpp"

namespace smoothrl::envs {

struct Discrete {
  int n = 0;
};

/// Axis-aligned box, low < high elementwise.
struct Box {
  Vector low;
  Vector high;

  std::size_t dim() const { return low.size(); }
  bool contains(std::span<const double> x) const;
  void clip(std::span<double> x) const;
};

using ActionSpace = std::variant<Discrete, Box>;

/// Discrete index or continuous vector.
using Action = std::variant<int, Vector>;

struct EnvSpec {
  std::string id;
  std::size_t obs_dim = 0;
  ActionSpace action_space;
  int horizon = 1;
  Box observation_box;  // valid range of observations, used to clip attacked states
  double reward_min = 0.0;  // per-step reward bounds
  double reward_max = 0.0;

  bool discrete() const { return std::holds_alternative<Discrete>(action_space); }
  int num_actions() const;     // discrete only
  std::size_t action_dim() const;  // 1 for discrete
};

struct Transition {
  Vector state;
  Action action;
  double reward = 0.0;
  Vector next_state;
  bool done = false;      // episode over (goal reached or horizon)
  bool terminal = false;  // goal reached; no bootstrapping past this step
};

struct Trajectory {
  std::vector<Transition> transitions;
  double total_reward = 0.0;

  void push(Transition t);
  std::size_t size() const { return transitions.size(); }
};

/// Deterministic episodic environment. reset(seed) fixes the initial state; step() is a
/// pure function of (current state, action) and additionally enforces the horizon.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual Vector reset(std::uint64_t seed) = 0;
  virtual Transition step(const Action& action) = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;

  /// A valid observation drawn from a spread of reachable states, used to pick probe
  /// states for certification. Does not change the environment.
  virtual Vector sample_observation(Rng& rng) const = 0;

  const Vector& state() const { return state_; }
  int t() const { return t_; }
  bool done() const { return done_; }

 protected:
  Transition finish_step(Transition tr);

  Vector state_;
  int t_ = 0;
  bool done_ = true;
};

/// "gridreach" or "pointreach". Throws std::invalid_argument otherwise.
std::unique_ptr<Environment> make_env(std::string_view id);

/// One header row then one row per step:
/// episode,t,s0..s{n-1},a0..a{k-1},reward,done
std::string trajectory_log_csv(const EnvSpec& spec, std::span<const Trajectory> episodes);

}  // namespace smoothrl::envs
