#include "smoothrl/envs/point_reach.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "smoothrl/rng.hpp"

namespace smoothrl::envs {

PointReach::PointReach() {
  spec_.id = "pointreach";
  spec_.obs_dim = kObsDim;
  spec_.action_space = Box{Vector(2, -1.0), Vector(2, 1.0)};
  spec_.horizon = kHorizon;
  spec_.observation_box = Box{Vector(kObsDim, -1.0), Vector(kObsDim, 1.0)};
  spec_.reward_min = -2.0 * std::sqrt(2.0);
  spec_.reward_max = 0.0;
}

Vector PointReach::reset(std::uint64_t seed) {
  Rng rng(seed);
  state_.assign(kObsDim, 0.0);
  state_[0] = rng.uniform(-1.0, 1.0);
  state_[1] = rng.uniform(-1.0, 1.0);
  state_[4] = rng.uniform(-1.0, 1.0);
  state_[5] = rng.uniform(-1.0, 1.0);
  t_ = 0;
  done_ = false;
  return state_;
}

Transition PointReach::step(const Action& action) {
  if (done_) throw std::logic_error("pointreach: step after episode end");
  const Vector* a = std::get_if<Vector>(&action);
  if (!a) throw std::invalid_argument("pointreach: expects a continuous action");
  return finish_step(pointreach_step(state_, *a));
}

std::unique_ptr<Environment> PointReach::clone() const { return std::make_unique<PointReach>(*this); }

Vector PointReach::sample_observation(Rng& rng) const {
  Vector s(kObsDim);
  for (double& v : s) v = rng.uniform(-1.0, 1.0);
  return s;
}

Transition pointreach_step(std::span<const double> state, std::span<const double> action) {
  if (state.size() != PointReach::kObsDim) throw std::invalid_argument("pointreach: state must have 6 entries");
  if (action.size() != 2) throw std::invalid_argument("pointreach: action must have 2 entries");
  Transition tr;
  tr.state.assign(state.begin(), state.end());
  Vector a{std::clamp(action[0], -1.0, 1.0), std::clamp(action[1], -1.0, 1.0)};
  tr.action = a;
  Vector next(state.begin(), state.end());
  double dist2 = 0.0;
  for (int i = 0; i < 2; ++i) {
    next[2 + i] = std::clamp(state[2 + i] + PointReach::kDt * a[i], -1.0, 1.0);
    next[i] = std::clamp(state[i] + PointReach::kDt * next[2 + i], -1.0, 1.0);
    const double d = next[i] - next[4 + i];
    dist2 += d * d;
  }
  tr.reward = -std::sqrt(dist2);
  tr.next_state = std::move(next);
  return tr;
}

}  // namespace smoothrl::envs
