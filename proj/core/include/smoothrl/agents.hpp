#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>

#include "smoothrl/envs/env.hpp"
#include "smoothrl/nn/losses.hpp"
#include "smoothrl/nn/mlp.hpp"
#include "smoothrl/rng.hpp"
#include "smoothrl/smoothing/smoothing.hpp"

namespace smoothrl::agents {

/// Test-time action rule. Implementations are immutable and safe to share across threads;
/// all randomness comes from the caller's stream.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual envs::Action act(std::span<const double> obs, Rng& rng) const = 0;
  virtual bool discrete() const = 0;
  virtual std::string name() const = 0;
};

/// argmax_a Q(D(s), a) on the observation as given (vanilla DQN when no denoiser).
class GreedyQAgent final : public Agent {
 public:
  GreedyQAgent(nn::Mlp qnet, std::optional<nn::Mlp> denoiser = std::nullopt);
  envs::Action act(std::span<const double> obs, Rng& rng) const override;
  bool discrete() const override { return true; }
  std::string name() const override { return "greedy-q"; }

  const nn::Mlp& qnet() const { return qnet_; }
  const nn::Mlp* denoiser() const { return denoiser_ ? &*denoiser_ : nullptr; }

 private:
  nn::Mlp qnet_;
  std::optional<nn::Mlp> denoiser_;
};

/// Hard randomized smoothing: argmax of the Monte-Carlo vote fractions.
class SmoothedQAgent final : public Agent {
 public:
  SmoothedQAgent(nn::Mlp qnet, std::optional<nn::Mlp> denoiser, smoothing::SmoothConfig cfg);
  envs::Action act(std::span<const double> obs, Rng& rng) const override;
  bool discrete() const override { return true; }
  std::string name() const override { return "smoothed-q"; }

  const nn::Mlp& qnet() const { return qnet_; }
  const nn::Mlp* denoiser() const { return denoiser_ ? &*denoiser_ : nullptr; }
  const smoothing::SmoothConfig& config() const { return cfg_; }

 private:
  nn::Mlp qnet_;
  std::optional<nn::Mlp> denoiser_;
  smoothing::SmoothConfig cfg_;
};

/// Single noise draw per state: argmax_a Q(D(s + delta), a). This is the per-state rule
/// whose trajectory returns the reward certificate is stated for.
class NoisyQAgent final : public Agent {
 public:
  NoisyQAgent(nn::Mlp qnet, std::optional<nn::Mlp> denoiser, double sigma);
  envs::Action act(std::span<const double> obs, Rng& rng) const override;
  bool discrete() const override { return true; }
  std::string name() const override { return "noisy-q"; }

 private:
  nn::Mlp qnet_;
  std::optional<nn::Mlp> denoiser_;
  double sigma_;
};

/// Deterministic Gaussian-policy mean (vanilla PPO at test time).
class MeanPolicyAgent final : public Agent {
 public:
  explicit MeanPolicyAgent(nn::GaussianPolicy policy);
  envs::Action act(std::span<const double> obs, Rng& rng) const override;
  bool discrete() const override { return false; }
  std::string name() const override { return "mean-policy"; }
  const nn::GaussianPolicy& policy() const { return policy_; }

 private:
  nn::GaussianPolicy policy_;
};

/// Percentile-smoothed deterministic action.
class SmoothedPolicyAgent final : public Agent {
 public:
  SmoothedPolicyAgent(nn::GaussianPolicy policy, smoothing::SmoothConfig cfg);
  envs::Action act(std::span<const double> obs, Rng& rng) const override;
  bool discrete() const override { return false; }
  std::string name() const override { return "smoothed-policy"; }
  const nn::GaussianPolicy& policy() const { return policy_; }
  const smoothing::SmoothConfig& config() const { return cfg_; }

 private:
  nn::GaussianPolicy policy_;
  smoothing::SmoothConfig cfg_;
};

/// Mean head at a single noisy copy of the state.
class NoisyPolicyAgent final : public Agent {
 public:
  NoisyPolicyAgent(nn::GaussianPolicy policy, double sigma);
  envs::Action act(std::span<const double> obs, Rng& rng) const override;
  bool discrete() const override { return false; }
  std::string name() const override { return "noisy-policy"; }

 private:
  nn::GaussianPolicy policy_;
  double sigma_;
};

}  // namespace smoothrl::agents
