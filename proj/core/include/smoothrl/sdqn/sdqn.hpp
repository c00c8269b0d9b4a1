#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "smoothrl/envs/env.hpp"
#include "smoothrl/nn/mlp.hpp"
#include "smoothrl/rng.hpp"
#include "smoothrl/smoothing/smoothing.hpp"

namespace smoothrl::sdqn {

/// Linear decay from `start` to `end` over `decay_steps`, constant afterwards.
struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  std::uint64_t decay_steps = 10000;

  double at(std::uint64_t step) const;
  void validate() const;
};

struct DqnConfig {
  std::uint64_t steps = 50000;
  std::size_t batch_size = 32;
  double gamma = 0.99;
  double lr = 1e-3;
  std::size_t buffer_capacity = 50000;
  std::size_t learning_starts = 1000;
  std::size_t train_every = 1;
  std::size_t target_sync_interval = 500;
  EpsilonSchedule epsilon{1.0, 0.05, 10000};
  std::vector<std::size_t> hidden{64, 64};
  double reward_threshold = 0.9;
  bool early_stop = false;        // stop once the greedy evaluation clears the threshold
  std::uint64_t eval_interval = 5000;
  int eval_episodes = 20;

  void validate() const;
};

struct EpisodeRecord {
  std::uint64_t step = 0;  // environment steps taken when the episode finished
  double reward = 0.0;
  double epsilon = 0.0;
  double loss_total = 0.0;  // means over updates during the episode; NaN when none
  double loss_recon = 0.0;
  double loss_td = 0.0;
};

struct PretrainResult {
  nn::Mlp qnet;
  bool reached_threshold = false;
  double final_greedy_reward = 0.0;
  std::uint64_t steps_run = 0;
  std::vector<EpisodeRecord> episodes;
};

/// Vanilla DQN on clean states: target network, Huber TD loss, Adam, uniform replay.
/// Bootstrapping stops only at terminal (goal) transitions, not at horizon truncation.
PretrainResult pretrain_q(const envs::Environment& env, const DqnConfig& cfg, Rng& rng);

/// Mean return of the greedy policy argmax Q(D(s)) over `episodes` resets seeded 0..n-1.
double greedy_return(const envs::Environment& env, const nn::Mlp& qnet, const nn::Mlp* denoiser,
                     int episodes);

struct SdqnConfig {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double sigma = 0.1;
  double gamma = 0.99;
  double huber_zeta = 1.0;
  EpsilonSchedule epsilon{1.0, 0.05, 6000};
  std::uint64_t steps = 30000;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::size_t buffer_capacity = 50000;
  std::size_t learning_starts = 500;
  std::size_t train_every = 1;
  std::size_t denoiser_hidden = 128;

  void validate() const;
};

/// Residual denoiser in -> hidden -> in whose last layer starts at zero, so the network
/// is the identity at initialization.
nn::Mlp make_denoiser(std::size_t obs_dim, std::size_t hidden, Rng& rng);

/// Training-time action: uniform with probability epsilon_t, otherwise
/// argmax Q(D(state + delta)), delta ~ N(0, sigma^2 I). With epsilon_t == 0 the only draw is
/// one noise key, used as sample 0 of counter noise (matching sdqn_act_test at m = 1).
int sdqn_select_action(const nn::Mlp& qnet, const nn::Mlp& denoiser, std::span<const double> state,
                       double epsilon_t, double sigma, Rng& rng);

struct SdqnLoss {
  double total = 0.0;
  double recon = 0.0;  // batch mean of ||D(s~) - s||^2 / N
  double td = 0.0;     // batch mean of huber(eta)
  Vector grad;         // d total / d denoiser parameters
};

/// Combined reconstruction + TD loss over `batch`, with explicit noise vectors (one per
/// transition, already scaled by sigma). Only the denoiser receives gradients; the TD
/// target r + gamma max Q(s') uses the clean next state.
SdqnLoss sdqn_loss(std::span<const envs::Transition> batch, const nn::Mlp& qnet,
                   const nn::Mlp& denoiser, const SdqnConfig& cfg,
                   std::span<const Vector> noise);

/// As above, drawing the noise from rng.
SdqnLoss sdqn_loss(std::span<const envs::Transition> batch, const nn::Mlp& qnet,
                   const nn::Mlp& denoiser, const SdqnConfig& cfg, Rng& rng);

struct SdqnResult {
  nn::Mlp denoiser;
  std::vector<EpisodeRecord> episodes;
  std::vector<double> step_loss;   // total loss per update, in order
  std::vector<double> step_recon;
  std::vector<double> step_td;
};

/// Trains the denoiser in front of a frozen Q-network. Throws DivergenceError on a
/// non-finite loss.
SdqnResult train_sdqn(const envs::Environment& env, const nn::Mlp& qnet, const SdqnConfig& cfg,
                      Rng& rng);

/// Test-time action: argmax of the smoothed vote estimate, lowest index on ties.
int sdqn_act_test(const nn::Mlp& qnet, const nn::Mlp* denoiser, std::span<const double> state,
                  const smoothing::SmoothConfig& cfg, Rng& rng);

/// CSV with columns step,episode_reward,loss_total,loss_recon,loss_td.
std::string sdqn_metrics_csv(std::span<const EpisodeRecord> episodes);

/// CSV with columns step,episode_reward,epsilon,loss_td.
std::string pretrain_metrics_csv(std::span<const EpisodeRecord> episodes);

}  // namespace smoothrl::sdqn
