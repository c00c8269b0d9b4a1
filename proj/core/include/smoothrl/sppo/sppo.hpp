#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smoothrl/attacks/attacks.hpp"
#include "smoothrl/envs/env.hpp"
#include "smoothrl/nn/losses.hpp"
#include "smoothrl/nn/mlp.hpp"
#include "smoothrl/rng.hpp"

namespace smoothrl::sppo {

struct PpoConfig {
  double clip = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double sigma = 0.2;  // 0 gives vanilla PPO
  std::size_t m = 5;
  double p = 0.5;
  std::uint64_t iterations = 150;
  int trajectories = 8;  // K, episodes per iteration
  int epochs = 10;
  std::size_t minibatch = 200;
  double policy_lr = 3e-4;
  double value_lr = 1e-3;
  std::vector<std::size_t> hidden{64, 64};
  double init_log_std = -0.5;
  bool adversary_enabled = false;
  double adversary_budget = 0.0;  // l-infinity radius of the adversary's state perturbation
  double adversary_lr = 3e-4;

  void validate() const;
};

/// Per-step record of how the agent acted, so the smoothed log-probability can be
/// recomputed later under identical noise.
struct CollectedStep {
  std::uint64_t noise_key = 0;
  Vector sampled_action;  // before the environment's action clip
  double log_prob = 0.0;  // smoothed log-probability at collection time
};

/// One episode as the agent saw it: transition states are the (possibly perturbed)
/// observations the agent acted on; rewards are the true environment rewards.
struct Rollout {
  envs::Trajectory trajectory;
  std::vector<CollectedStep> steps;
};

/// Smoothed log N(action; M~, Sigma~^2) where M~ is the keyed percentile of the mean head.
/// When grad_params / grad_log_std are non-empty, scale * gradient is added to them; the
/// gradient of each mean coordinate flows into the sample that supplied its order statistic.
double smoothed_log_prob(const nn::GaussianPolicy& policy, std::span<const double> state,
                         std::span<const double> action, double sigma, std::size_t m, double p,
                         std::uint64_t key, std::span<double> grad_params = {},
                         std::span<double> grad_log_std = {}, double scale = 1.0);

/// K episodes with median-smoothed sampling: each step draws a noise key, computes
/// (M~, Sigma~), samples a ~ N(M~, Sigma~^2) and steps the environment. Episode k uses its
/// own streams derived from one draw of rng, so the result is independent of worker count.
std::vector<Rollout> collect_trajectories(const envs::Environment& env,
                                          const nn::GaussianPolicy& policy, const PpoConfig& cfg,
                                          Rng& rng);

struct GaeResult {
  Vector advantages;
  Vector returns;  // advantages + value estimates
};

/// Generalized advantage estimation. Bootstraps from V(next_state) after the last step
/// unless that step is terminal.
GaeResult gae(const envs::Trajectory& trajectory, const nn::Mlp& value_net, double gamma,
              double lambda);

struct AdvantageBatch {
  std::vector<Vector> states;
  std::vector<Vector> actions;
  std::vector<std::uint64_t> noise_keys;
  Vector old_log_probs;
  Vector advantages;
  Vector returns;

  std::size_t size() const { return states.size(); }
  /// Throws ShapeError when the columns have different lengths.
  void validate() const;
};

/// Shifts and scales to zero mean and unit (population) variance. A constant vector is
/// only centered.
void normalize_advantages(std::span<double> advantages);

struct SurrogateLoss {
  double loss = 0.0;
  Vector grad_params;   // d loss / d mean-net parameters
  Vector grad_log_std;  // d loss / d log std
  Vector ratios;        // per evaluated element
  double clip_fraction = 0.0;
};

/// -mean(min(R A, clip(R, 1 - c, 1 + c) A)) with R = exp(new smoothed log-prob - old).
/// Evaluates `indices` (all elements when empty).
SurrogateLoss sppo_policy_loss(const AdvantageBatch& batch, const nn::GaussianPolicy& policy,
                               const PpoConfig& cfg, std::span<const std::size_t> indices = {});

/// +mean(min(R A, clip(R) A)) for the adversary policy, with A the adversary's own
/// advantages. The adversary ascends this value.
SurrogateLoss smoothed_adversary_loss(const AdvantageBatch& batch,
                                      const nn::GaussianPolicy& adversary, const PpoConfig& cfg,
                                      std::span<const std::size_t> indices = {});

/// mean(min(R A, clip(R) A)) and mean(R A) for given ratios.
double clipped_surrogate(std::span<const double> ratios, std::span<const double> advantages,
                         double clip);
double unclipped_surrogate(std::span<const double> ratios, std::span<const double> advantages);

struct IterationRecord {
  std::uint64_t iteration = 0;
  double mean_reward = 0.0;  // mean total reward of the iteration's training episodes
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double adversary_loss = 0.0;  // NaN without an adversary
};

struct PpoResult {
  nn::GaussianPolicy policy;
  nn::Mlp value;
  std::optional<nn::GaussianPolicy> adversary;
  std::optional<nn::Mlp> adversary_value;
  std::vector<IterationRecord> iterations;
};

/// Initial networks exactly as train_sppo would create them for this rng.
PpoResult initial_networks(const envs::Environment& env, const PpoConfig& cfg, const Rng& rng);

/// Median-smoothed PPO. Throws DivergenceError on a non-finite loss.
PpoResult train_sppo(const envs::Environment& env, const PpoConfig& cfg, Rng& rng);

/// Alternating agent / smoothed-adversary training. The adversary observes the true state
/// and proposes dp; the agent acts on clip(s + budget * clip(dp, -1, 1)). The agent's
/// random streams match train_sppo, so a zero budget reproduces it.
PpoResult train_s_atla(const envs::Environment& env, const PpoConfig& cfg, Rng& rng);

/// Adversary-only training against a frozen agent policy (acting with the smoothed rule
/// of cfg). Returns the trained adversary and its records.
PpoResult train_adversary(const envs::Environment& env, const nn::GaussianPolicy& agent,
                          const PpoConfig& cfg, Rng& rng);

/// Evaluation-time perturbation from a trained adversary: budget * clip(M~, -1, 1) using
/// the adversary's smoothed deterministic action, clipped into the observation box.
class AdversaryAttack final : public attacks::Attack {
 public:
  AdversaryAttack(nn::GaussianPolicy adversary, double budget, double sigma, std::size_t m,
                  std::optional<envs::Box> obs_box);
  Vector perturb(std::span<const double> obs, Rng& rng) const override;
  std::string name() const override { return "adversary"; }

 private:
  nn::GaussianPolicy adversary_;
  double budget_;
  double sigma_;
  std::size_t m_;
  std::optional<envs::Box> obs_box_;
};

/// CSV with columns iteration,mean_reward,policy_loss,value_loss,adversary_loss.
std::string ppo_metrics_csv(std::span<const IterationRecord> iterations);

}  // namespace smoothrl::sppo
