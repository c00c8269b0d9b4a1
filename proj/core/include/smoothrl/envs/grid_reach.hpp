#pragma once

#include "smoothrl/envs/env.hpp"

namespace smoothrl::envs {

/// 5x5 grid. Observation (agent_x, agent_y, goal_x, goal_y) / 4, zero-padded to 8.
/// Actions: 0 up (+y), 1 down (-y), 2 left (-x), 3 right (+x). Moves clip at walls.
/// Reward +1 and episode end on reaching the goal, -0.01 otherwise; horizon 64.
class GridReach final : public Environment {
 public:
  static constexpr int kSize = 5;
  static constexpr std::size_t kObsDim = 8;
  static constexpr int kHorizon = 64;
  static constexpr double kGoalReward = 1.0;
  static constexpr double kStepReward = -0.01;
  enum Move : int { up = 0, down = 1, left = 2, right = 3 };

  GridReach();

  const EnvSpec& spec() const override { return spec_; }
  /// Agent (0,0), goal (4,4) for every seed.
  Vector reset(std::uint64_t seed) override;
  Transition step(const Action& action) override;
  std::unique_ptr<Environment> clone() const override;
  Vector sample_observation(Rng& rng) const override;

  /// Observation for an arbitrary layout; handy for probing policies off the start path.
  static Vector observe(int agent_x, int agent_y, int goal_x = 4, int goal_y = 4);

 private:
  EnvSpec spec_;
};

/// Pure dynamics. Throws std::invalid_argument for an action outside 0..3 or a state
/// whose decoded agent position is off the grid.
Transition gridreach_step(std::span<const double> state, int action);

}  // namespace smoothrl::envs
