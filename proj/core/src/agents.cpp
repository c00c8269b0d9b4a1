#include "smoothrl/agents.hpp"

namespace smoothrl::agents {

GreedyQAgent::GreedyQAgent(nn::Mlp qnet, std::optional<nn::Mlp> denoiser)
    : qnet_(std::move(qnet)), denoiser_(std::move(denoiser)) {}

envs::Action GreedyQAgent::act(std::span<const double> obs, Rng&) const {
  return smoothing::greedy_action(qnet_, denoiser(), obs);
}

SmoothedQAgent::SmoothedQAgent(nn::Mlp qnet, std::optional<nn::Mlp> denoiser,
                               smoothing::SmoothConfig cfg)
    : qnet_(std::move(qnet)), denoiser_(std::move(denoiser)), cfg_(cfg) {
  cfg_.validate();
}

envs::Action SmoothedQAgent::act(std::span<const double> obs, Rng& rng) const {
  return smoothing::estimate_smoothed_q(qnet_, denoiser(), obs, cfg_, rng).top_action;
}

NoisyQAgent::NoisyQAgent(nn::Mlp qnet, std::optional<nn::Mlp> denoiser, double sigma)
    : qnet_(std::move(qnet)), denoiser_(std::move(denoiser)), sigma_(sigma) {}

envs::Action NoisyQAgent::act(std::span<const double> obs, Rng& rng) const {
  Vector x(obs.begin(), obs.end());
  for (double& v : x) v += sigma_ * rng.normal();
  return smoothing::greedy_action(qnet_, denoiser_ ? &*denoiser_ : nullptr, x);
}

MeanPolicyAgent::MeanPolicyAgent(nn::GaussianPolicy policy) : policy_(std::move(policy)) {}

envs::Action MeanPolicyAgent::act(std::span<const double> obs, Rng&) const {
  return policy_.mean_net.forward(obs);
}

SmoothedPolicyAgent::SmoothedPolicyAgent(nn::GaussianPolicy policy, smoothing::SmoothConfig cfg)
    : policy_(std::move(policy)), cfg_(cfg) {
  cfg_.validate();
}

envs::Action SmoothedPolicyAgent::act(std::span<const double> obs, Rng& rng) const {
  return smoothing::deterministic_smoothed_action(policy_, obs, cfg_, rng);
}

NoisyPolicyAgent::NoisyPolicyAgent(nn::GaussianPolicy policy, double sigma)
    : policy_(std::move(policy)), sigma_(sigma) {}

envs::Action NoisyPolicyAgent::act(std::span<const double> obs, Rng& rng) const {
  Vector x(obs.begin(), obs.end());
  for (double& v : x) v += sigma_ * rng.normal();
  return policy_.mean_net.forward(x);
}

}  // namespace smoothrl::agents
