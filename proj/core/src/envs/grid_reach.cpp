#include "smoothrl/envs/grid_reach.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace smoothrl::envs {

namespace {

constexpr double kScale = GridReach::kSize - 1;

int decode(double v) {
  const double cell = std::round(v * kScale);
  if (!(cell >= 0.0 && cell <= kScale)) {
    throw std::invalid_argument("gridreach: position outside the 5x5 grid");
  }
  return static_cast<int>(cell);
}

}  // namespace

GridReach::GridReach() {
  spec_.id = "gridreach";
  spec_.obs_dim = kObsDim;
  spec_.action_space = Discrete{4};
  spec_.horizon = kHorizon;
  spec_.observation_box = Box{Vector(kObsDim, 0.0), Vector(kObsDim, 1.0)};
  spec_.reward_min = kStepReward;
  spec_.reward_max = kGoalReward;
}

Vector GridReach::observe(int agent_x, int agent_y, int goal_x, int goal_y) {
  Vector obs(kObsDim, 0.0);
  obs[0] = agent_x / kScale;
  obs[1] = agent_y / kScale;
  obs[2] = goal_x / kScale;
  obs[3] = goal_y / kScale;
  return obs;
}

Vector GridReach::reset(std::uint64_t /*seed*/) {
  state_ = observe(0, 0, kSize - 1, kSize - 1);
  t_ = 0;
  done_ = false;
  return state_;
}

Transition GridReach::step(const Action& action) {
  if (done_) throw std::logic_error("gridreach: step after episode end");
  const int* a = std::get_if<int>(&action);
  if (!a) throw std::invalid_argument("gridreach: expects a discrete action");
  return finish_step(gridreach_step(state_, *a));
}

std::unique_ptr<Environment> GridReach::clone() const { return std::make_unique<GridReach>(*this); }

Vector GridReach::sample_observation(Rng& rng) const {
  // Any cell except the goal, uniformly.
  const int cell = rng.uniform_int(kSize * kSize - 1);
  return observe(cell % kSize, cell / kSize);
}

Transition gridreach_step(std::span<const double> state, int action) {
  if (state.size() != GridReach::kObsDim) throw std::invalid_argument("gridreach: state must have 8 entries");
  if (action < 0 || action > 3) {
    throw std::invalid_argument("gridreach: invalid action index " + std::to_string(action));
  }
  int x = decode(state[0]);
  int y = decode(state[1]);
  const int gx = decode(state[2]);
  const int gy = decode(state[3]);
  switch (action) {
    case GridReach::up: y = std::min(y + 1, GridReach::kSize - 1); break;
    case GridReach::down: y = std::max(y - 1, 0); break;
    case GridReach::left: x = std::max(x - 1, 0); break;
    case GridReach::right: x = std::min(x + 1, GridReach::kSize - 1); break;
  }
  Transition tr;
  tr.state.assign(state.begin(), state.end());
  tr.action = action;
  tr.next_state = GridReach::observe(x, y, gx, gy);
  tr.terminal = x == gx && y == gy;
  tr.done = tr.terminal;
  tr.reward = tr.terminal ? GridReach::kGoalReward : GridReach::kStepReward;
  return tr;
}

}  // namespace smoothrl::envs
