#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smoothrl/agents.hpp"
#include "smoothrl/envs/env.hpp"
#include "smoothrl/nn/losses.hpp"
#include "smoothrl/nn/mlp.hpp"
#include "smoothrl/rng.hpp"
#include "smoothrl/smoothing/smoothing.hpp"

namespace smoothrl::attacks {

enum class Norm { l2, linf };

std::string_view to_string(Norm n);
Norm norm_from_string(std::string_view s);

struct AttackConfig {
  double epsilon = 0.05;
  Norm norm = Norm::linf;
  int steps = 10;
  double step_size = 0.0;  // 0 selects 2 * epsilon / steps
  double sigma = 0.1;      // smoothing noise for the s-* variants
  int restarts = 1;
  std::optional<envs::Box> obs_box;  // perturbed observations are clipped into this box

  void validate() const;
  double effective_step() const;
};

/// Projects delta onto the epsilon ball in place.
void project(std::span<double> delta, double epsilon, Norm norm);

/// log softmax(Q(D(x)))[target] and its gradient with respect to x.
double ce_objective(const nn::Mlp& qnet, const nn::Mlp* denoiser, std::span<const double> x,
                    int target, std::span<double> grad_x);

/// PGD on the log-softmax of the target action, starting from the clean state. Returns
/// the iterate with the lowest objective seen (the clean state included).
Vector pgd_attack(const nn::Mlp& qnet, const nn::Mlp* denoiser, std::span<const double> state,
                  int target_action, const AttackConfig& cfg, Rng& rng);

/// Smoothed PGD: every iterate is evaluated and differentiated at a freshly noised copy
/// x + N(0, sigma^2 I). Best-iterate selection uses the objective of that same draw.
Vector s_pgd_attack(const nn::Mlp& qnet, const nn::Mlp* denoiser, std::span<const double> state,
                    int target_action, const AttackConfig& cfg, Rng& rng);

/// Objective to minimize: returns the value and writes the gradient at x.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

/// state - epsilon * sign(grad objective(state)).
Vector fgsm(const Objective& objective, std::span<const double> state, double epsilon);

/// As fgsm, with the gradient taken at state + noise.
Vector s_fgsm(const Objective& objective, std::span<const double> state, double epsilon,
              std::span<const double> noise);

/// Maximal action difference: projected ascent on KL(pi(.|s) || pi(.|s + delta)) from a
/// random start in the ball. The clean-side mean defaults to the policy mean at s; pass
/// the smoothed deterministic action for smoothed agents. Never returns a state with
/// lower divergence than the clean one.
Vector mad_attack(const nn::GaussianPolicy& policy, std::span<const double> state,
                  const AttackConfig& cfg, Rng& rng,
                  std::optional<std::span<const double>> reference_mean = std::nullopt);

/// KL divergence between two diagonal Gaussians sharing the policy's std.
double policy_kl(const nn::GaussianPolicy& policy, std::span<const double> reference_mean,
                 std::span<const double> x, std::span<double> grad_x = {});

/// Observation perturbation used by the evaluation harness.
class Attack {
 public:
  virtual ~Attack() = default;
  virtual Vector perturb(std::span<const double> obs, Rng& rng) const = 0;
  virtual std::string name() const = 0;
};

class NoAttack final : public Attack {
 public:
  Vector perturb(std::span<const double> obs, Rng&) const override {
    return Vector(obs.begin(), obs.end());
  }
  std::string name() const override { return "none"; }
};

enum class QAttackMethod { pgd, s_pgd, fgsm, s_fgsm };

/// Gradient attacks against Q-network agents. The target action is the agent's own clean
/// choice: greedy for a plain agent, smoothed argmax when target_smoothing is given.
class QAttack final : public Attack {
 public:
  QAttack(QAttackMethod method, nn::Mlp qnet, std::optional<nn::Mlp> denoiser, AttackConfig cfg,
          std::optional<smoothing::SmoothConfig> target_smoothing = std::nullopt);

  Vector perturb(std::span<const double> obs, Rng& rng) const override;
  std::string name() const override;

 private:
  QAttackMethod method_;
  nn::Mlp qnet_;
  std::optional<nn::Mlp> denoiser_;
  AttackConfig cfg_;
  std::optional<smoothing::SmoothConfig> target_smoothing_;
};

/// MAD against Gaussian policies; the clean reference is smoothed when reference_smoothing
/// is given.
class MadAttack final : public Attack {
 public:
  MadAttack(nn::GaussianPolicy policy, AttackConfig cfg,
            std::optional<smoothing::SmoothConfig> reference_smoothing = std::nullopt);

  Vector perturb(std::span<const double> obs, Rng& rng) const override;
  std::string name() const override { return "mad"; }

 private:
  nn::GaussianPolicy policy_;
  AttackConfig cfg_;
  std::optional<smoothing::SmoothConfig> reference_smoothing_;
};

struct RewardStats {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::vector<double> per_episode;
};

RewardStats summarize(std::vector<double> rewards);

/// Runs `episodes` episodes. Each step the attack perturbs the observation, the agent acts
/// on the perturbed observation, and the true environment advances. Episode e draws its
/// reset seed and its agent/attack streams from (rng draw, e), so the result does not
/// depend on the worker count and a zero-budget attack reproduces clean evaluation.
RewardStats run_attack_eval(const envs::Environment& env, const agents::Agent& agent,
                            const Attack& attack, int episodes, Rng& rng);

/// run_attack_eval with NoAttack.
RewardStats evaluate(const envs::Environment& env, const agents::Agent& agent, int episodes, Rng& rng);

}  // namespace smoothrl::attacks
