#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smoothrl/agents.hpp"
#include "smoothrl/envs/env.hpp"
#include "smoothrl/nn/losses.hpp"
#include "smoothrl/nn/mlp.hpp"
#include "smoothrl/rng.hpp"
#include "smoothrl/smoothing/smoothing.hpp"

namespace smoothrl::certify {

/// Probabilities are clamped into [kProbFloor, 1 - kProbFloor] before the inverse CDF.
inline constexpr double kProbFloor = 1e-12;

enum class RadiusMethod { hard, crop };

struct RadiusCertificate {
  std::optional<double> radius;  // empty means uncertified (abstain)
  int top_action = 0;
  double q1_est = 0.0;
  double q2_est = 0.0;
  std::size_t m = 0;
  double alpha = 0.0;
  double sigma = 0.0;
  RadiusMethod method = RadiusMethod::hard;
  std::optional<double> v_min;  // crop only
  std::optional<double> v_max;

  bool certified() const { return radius.has_value(); }
};

/// Hard-RS radius (sigma/2)(Phi^-1(q1 - D) - Phi^-1(q2 + D)), D = hoeffding_delta(m, alpha).
/// Uncertified when q1 - D < q2 + D; radius 0 at exact equality.
RadiusCertificate certified_radius_hard(double q1_est, double q2_est,
                                        const smoothing::SmoothConfig& cfg);

/// Mean-smoothing radius over an output range [v_min, v_max]: the Hoeffding margin is
/// scaled by the range and both Q estimates are rescaled into [0, 1] before Phi^-1.
RadiusCertificate certified_radius_crop(double q1, double q2, double v_min, double v_max,
                                        const smoothing::SmoothConfig& cfg);

/// estimate_smoothed_q + certified_radius_hard on the top two actions.
RadiusCertificate certify_state(const nn::Mlp& qnet, const nn::Mlp* denoiser,
                                std::span<const double> state, const smoothing::SmoothConfig& cfg,
                                Rng& rng);

/// Mean-smoothing (CROP-style) certificate for a Q-network: the top two entries of the
/// Monte-Carlo mean of clamp(Q(D(s + delta)), v_min, v_max) fed to certified_radius_crop.
RadiusCertificate certify_state_crop(const nn::Mlp& qnet, const nn::Mlp* denoiser,
                                     std::span<const double> state, double v_min, double v_max,
                                     const smoothing::SmoothConfig& cfg, Rng& rng);

struct ActionBoundResult {
  Vector lower;
  Vector upper;
  double p = 0.5;
  double p_lower = 0.0;
  double p_upper = 0.0;
  double epsilon = 0.0;
  double sigma = 0.0;
  std::size_t m = 0;
  double alpha = 0.0;
  bool certified = false;
};

/// Percentile interval of the smoothed deterministic action under any l2 state
/// perturbation of norm <= epsilon_l2. Uncertified when a probability clamp fires or a
/// level falls below 1/m (lower) or above (m-1)/m (upper), where no sample resolves it.
ActionBoundResult action_bound(const nn::GaussianPolicy& policy, std::span<const double> state,
                               double epsilon_l2, const smoothing::SmoothConfig& cfg, Rng& rng);

/// Same bound computed from explicit mean-head samples (one row per noise draw).
ActionBoundResult action_bound_from_samples(std::span<const Vector> samples, double epsilon_l2,
                                            const smoothing::SmoothConfig& cfg);

/// Lower/upper percentile levels for the action bound. Returns false when a probability
/// clamp fired.
bool action_bound_levels(double p, double delta, double epsilon_over_sigma, double& p_lower,
                         double& p_upper);

struct RewardBoundResult {
  std::optional<double> bound;  // empty means uncertified
  double budget = 0.0;          // total l2 budget B over the trajectory
  double p = 0.5;
  double p_lower = 0.0;
  std::size_t m_tau = 0;
  double alpha = 0.0;
  double sigma = 0.0;
  std::vector<double> returns;

  bool certified() const { return bound.has_value(); }
};

/// Collects m_tau episode returns of `noisy_agent` (an agent that adds its own single
/// smoothing draw per state, e.g. NoisyQAgent) and certifies the p-th percentile of the
/// return under any trajectory perturbation of total l2 norm <= budget.
RewardBoundResult reward_lower_bound(const envs::Environment& env, const agents::Agent& noisy_agent,
                                     double budget, const smoothing::SmoothConfig& cfg,
                                     std::size_t m_tau, Rng& rng);

/// Certificate from an existing return sample. Uncertified when the lower level clamps or
/// drops below 1/m_tau.
RewardBoundResult reward_bound_from_returns(std::vector<double> returns, double budget,
                                            const smoothing::SmoothConfig& cfg);

struct AdivResult {
  double adiv = 0.0;
  std::size_t evaluated = 0;  // (state, epsilon) pairs with a certified bound
  std::size_t skipped = 0;    // uncertified pairs
};

/// Mean over rollout states and budgets of ||upper - lower||_2 / (2 epsilon). Rollouts
/// follow the smoothed deterministic policy. Throws std::runtime_error when nothing
/// could be certified.
AdivResult adiv(const nn::GaussianPolicy& policy, const envs::Environment& env,
                const smoothing::SmoothConfig& cfg, std::span<const double> epsilons,
                int trajectories, Rng& rng);

nlohmann::json to_json(const RadiusCertificate& c);
nlohmann::json to_json(const ActionBoundResult& r);
nlohmann::json to_json(const RewardBoundResult& r, bool include_returns = false);
nlohmann::json to_json(const AdivResult& r);

/// One row per state; uncertified rows print "uncertified" in the radius column.
std::string radius_table_csv(std::span<const RadiusCertificate> certs);
std::string action_bound_table_csv(std::span<const ActionBoundResult> bounds);

}  // namespace smoothrl::certify
