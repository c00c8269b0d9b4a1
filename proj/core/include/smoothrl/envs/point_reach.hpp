#pragma once

#include "smoothrl/envs/env.hpp"

namespace smoothrl::envs {

/// Point mass in [-1,1]^2. State (pos, vel, goal) in R^6, action in [-1,1]^2.
///   vel <- clip(vel + 0.1 a, -1, 1);  pos <- clip(pos + 0.1 vel, -1, 1)
///   reward = -||pos - goal||_2, horizon 100.
class PointReach final : public Environment {
 public:
  static constexpr std::size_t kObsDim = 6;
  static constexpr int kHorizon = 100;
  static constexpr double kDt = 0.1;

  PointReach();

  const EnvSpec& spec() const override { return spec_; }
  /// pos and goal uniform on [-1,1]^2 from the seed, vel = 0.
  Vector reset(std::uint64_t seed) override;
  Transition step(const Action& action) override;
  std::unique_ptr<Environment> clone() const override;
  Vector sample_observation(Rng& rng) const override;

 private:
  EnvSpec spec_;
};

/// Pure dynamics. Actions outside [-1,1]^2 are clipped.
Transition pointreach_step(std::span<const double> state, std::span<const double> action);

}  // namespace smoothrl::envs
