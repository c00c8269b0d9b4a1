#include "smoothrl/sdqn/sdqn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "smoothrl/error.hpp"
#include "smoothrl/io/csv.hpp"
#include "smoothrl/nn/adam.hpp"
#include "smoothrl/nn/losses.hpp"
#include "smoothrl/sdqn/replay_buffer.hpp"

namespace smoothrl::sdqn {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_discrete(const envs::Environment& env) {
  if (!env.spec().discrete()) throw std::invalid_argument("S-DQN needs a discrete-action environment");
}

nn::Mlp make_qnet(std::size_t obs_dim, std::size_t n_actions, const std::vector<std::size_t>& hidden,
                  Rng& rng) {
  std::vector<std::size_t> dims{obs_dim};
  std::vector<nn::Activation> acts;
  for (std::size_t h : hidden) {
    dims.push_back(h);
    acts.push_back(nn::Activation::relu);
  }
  dims.push_back(n_actions);
  acts.push_back(nn::Activation::identity);
  return nn::Mlp::glorot(dims, acts, rng);
}

double max_of(const Vector& v) { return *std::max_element(v.begin(), v.end()); }

// Running means of the losses logged between two episode ends.
struct LossAccumulator {
  double total = 0.0, recon = 0.0, td = 0.0;
  std::size_t n = 0;

  void add(double t, double r, double d) {
    total += t;
    recon += r;
    td += d;
    ++n;
  }
  void flush(EpisodeRecord& rec) {
    rec.loss_total = n ? total / static_cast<double>(n) : kNaN;
    rec.loss_recon = n ? recon / static_cast<double>(n) : kNaN;
    rec.loss_td = n ? td / static_cast<double>(n) : kNaN;
    *this = {};
  }
};

}  // namespace

double EpsilonSchedule::at(std::uint64_t step) const {
  if (decay_steps == 0 || step >= decay_steps) return end;
  const double frac = static_cast<double>(step) / static_cast<double>(decay_steps);
  return start + (end - start) * frac;
}

void EpsilonSchedule::validate() const {
  if (!(start >= 0.0 && start <= 1.0 && end >= 0.0 && end <= 1.0)) {
    throw std::invalid_argument("epsilon schedule: start and end must be in [0,1]");
  }
}

void DqnConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in (0,1]");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (buffer_capacity < 1) throw std::invalid_argument("buffer_capacity must be >= 1");
  if (train_every < 1) throw std::invalid_argument("train_every must be >= 1");
  if (target_sync_interval < 1) throw std::invalid_argument("target_sync_interval must be >= 1");
  if (eval_episodes < 1) throw std::invalid_argument("eval_episodes must be >= 1");
  epsilon.validate();
}

void SdqnConfig::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw std::invalid_argument("lambda1, lambda2 must be >= 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in (0,1]");
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
  if (!(huber_zeta > 0.0)) throw std::invalid_argument("huber_zeta must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (buffer_capacity < 1) throw std::invalid_argument("buffer_capacity must be >= 1");
  if (train_every < 1) throw std::invalid_argument("train_every must be >= 1");
  if (denoiser_hidden < 1) throw std::invalid_argument("denoiser_hidden must be >= 1");
  epsilon.validate();
}

double greedy_return(const envs::Environment& env, const nn::Mlp& qnet, const nn::Mlp* denoiser,
                     int episodes) {
  double sum = 0.0;
  for (int e = 0; e < episodes; ++e) {
    auto local = env.clone();
    Vector obs = local->reset(static_cast<std::uint64_t>(e));
    while (!local->done()) {
      const auto tr = local->step(smoothing::greedy_action(qnet, denoiser, obs));
      sum += tr.reward;
      obs = tr.next_state;
    }
  }
  return sum / static_cast<double>(episodes);
}

PretrainResult pretrain_q(const envs::Environment& env, const DqnConfig& cfg, Rng& rng) {
  require_discrete(env);
  cfg.validate();
  const auto& spec = env.spec();
  const int n_actions = spec.num_actions();
  Rng init = rng.child("init");
  Rng explore = rng.child("explore");
  Rng replay_rng = rng.child("replay");
  const std::uint64_t env_key = derive_seed(rng.seed(), "env");

  PretrainResult result;
  result.qnet = make_qnet(spec.obs_dim, static_cast<std::size_t>(n_actions), cfg.hidden, init);
  nn::Mlp& q = result.qnet;
  nn::Mlp target = q;
  nn::Adam adam(q.num_parameters(), {.lr = cfg.lr});
  ReplayBuffer buffer(cfg.buffer_capacity);
  Vector grad(q.num_parameters());
  LossAccumulator acc;

  auto local = env.clone();
  std::uint64_t episode = 0;
  Vector obs = local->reset(derive_seed(env_key, episode));
  double ep_reward = 0.0;

  for (std::uint64_t step = 0; step < cfg.steps; ++step) {
    const double eps = cfg.epsilon.at(step);
    const int a = explore.uniform() < eps ? explore.uniform_int(n_actions)
                                          : smoothing::greedy_action(q, nullptr, obs);
    auto tr = local->step(a);
    ep_reward += tr.reward;
    obs = tr.next_state;
    buffer.push(std::move(tr));

    if (step + 1 >= cfg.learning_starts && (step + 1) % cfg.train_every == 0 &&
        buffer.size() >= cfg.batch_size) {
      std::fill(grad.begin(), grad.end(), 0.0);
      double loss = 0.0;
      const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
      for (std::size_t i : buffer.sample_indices(cfg.batch_size, replay_rng)) {
        const auto& t = buffer.at(i);
        const int ai = std::get<int>(t.action);
        const double y = t.reward + (t.terminal ? 0.0 : cfg.gamma * max_of(target.forward(t.next_state)));
        nn::Tape tape;
        const Vector qs = q.forward(t.state, tape);
        const double eta = y - qs[static_cast<std::size_t>(ai)];
        loss += nn::huber(eta) * inv_b;
        Vector g(qs.size(), 0.0);
        g[static_cast<std::size_t>(ai)] = -nn::huber_grad(eta) * inv_b;
        q.backward(tape, g, grad);
      }
      if (!std::isfinite(loss) || !all_finite(grad)) {
        throw DivergenceError("DQN pretraining loss became non-finite", step);
      }
      adam.step(q.parameters(), grad);
      acc.add(loss, kNaN, loss);
    }
    if ((step + 1) % cfg.target_sync_interval == 0) target = q;

    if (local->done()) {
      EpisodeRecord rec{.step = step + 1, .reward = ep_reward, .epsilon = eps};
      acc.flush(rec);
      result.episodes.push_back(rec);
      ++episode;
      obs = local->reset(derive_seed(env_key, episode));
      ep_reward = 0.0;
    }
    result.steps_run = step + 1;
    if (cfg.early_stop && cfg.eval_interval > 0 && (step + 1) % cfg.eval_interval == 0 &&
        greedy_return(env, q, nullptr, cfg.eval_episodes) >= cfg.reward_threshold) {
      break;
    }
  }
  result.final_greedy_reward = greedy_return(env, q, nullptr, cfg.eval_episodes);
  result.reached_threshold = result.final_greedy_reward >= cfg.reward_threshold;
  return result;
}

nn::Mlp make_denoiser(std::size_t obs_dim, std::size_t hidden, Rng& rng) {
  nn::Mlp d = nn::Mlp::glorot({obs_dim, hidden, obs_dim},
                              {nn::Activation::relu, nn::Activation::identity}, rng, true);
  std::ranges::fill(d.weights(1), 0.0);
  std::ranges::fill(d.biases(1), 0.0);
  return d;
}

int sdqn_select_action(const nn::Mlp& qnet, const nn::Mlp& denoiser, std::span<const double> state,
                       double epsilon_t, double sigma, Rng& rng) {
  if (!(epsilon_t >= 0.0 && epsilon_t <= 1.0)) throw std::invalid_argument("epsilon_t must be in [0,1]");
  if (epsilon_t > 0.0 && rng.uniform() < epsilon_t) {
    return rng.uniform_int(static_cast<int>(qnet.output_dim()));
  }
  const std::uint64_t key = rng.next_u64();
  return smoothing::greedy_action(qnet, &denoiser, smoothing::noisy_state(state, sigma, key, 0));
}

SdqnLoss sdqn_loss(std::span<const envs::Transition> batch, const nn::Mlp& qnet,
                   const nn::Mlp& denoiser, const SdqnConfig& cfg, std::span<const Vector> noise) {
  if (batch.empty()) throw std::invalid_argument("sdqn_loss: empty batch");
  if (noise.size() != batch.size()) throw ShapeError("sdqn_loss: one noise vector per transition");
  SdqnLoss out;
  out.grad.assign(denoiser.num_parameters(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const double inv_n = 1.0 / static_cast<double>(denoiser.input_dim());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto& t = batch[j];
    if (noise[j].size() != t.state.size()) throw ShapeError("sdqn_loss: noise dimension");
    Vector noisy = t.state;
    for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += noise[j][i];

    nn::Tape d_tape;
    const Vector d = denoiser.forward(noisy, d_tape);
    Vector grad_d(d.size());
    double recon = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double diff = d[i] - t.state[i];
      recon += diff * diff * inv_n;
      grad_d[i] = cfg.lambda1 * 2.0 * diff * inv_n * inv_b;
    }

    const int a = std::get<int>(t.action);
    const double y = t.reward + (t.terminal ? 0.0 : cfg.gamma * max_of(qnet.forward(t.next_state)));
    nn::Tape q_tape;
    const Vector q = qnet.forward(d, q_tape);
    const double eta = y - q[static_cast<std::size_t>(a)];
    const double td = nn::huber(eta, cfg.huber_zeta);
    Vector gq(q.size(), 0.0);
    gq[static_cast<std::size_t>(a)] = -cfg.lambda2 * nn::huber_grad(eta, cfg.huber_zeta) * inv_b;
    const Vector through_q = qnet.backward(q_tape, gq, {});
    for (std::size_t i = 0; i < grad_d.size(); ++i) grad_d[i] += through_q[i];
    denoiser.backward(d_tape, grad_d, out.grad);

    out.recon += recon * inv_b;
    out.td += td * inv_b;
  }
  out.total = cfg.lambda1 * out.recon + cfg.lambda2 * out.td;
  return out;
}

SdqnLoss sdqn_loss(std::span<const envs::Transition> batch, const nn::Mlp& qnet,
                   const nn::Mlp& denoiser, const SdqnConfig& cfg, Rng& rng) {
  std::vector<Vector> noise(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    noise[j].resize(batch[j].state.size());
    rng.fill_normal(noise[j], cfg.sigma);
  }
  return sdqn_loss(batch, qnet, denoiser, cfg, noise);
}

SdqnResult train_sdqn(const envs::Environment& env, const nn::Mlp& qnet, const SdqnConfig& cfg,
                      Rng& rng) {
  require_discrete(env);
  cfg.validate();
  const auto& spec = env.spec();
  if (qnet.input_dim() != spec.obs_dim || qnet.output_dim() != static_cast<std::size_t>(spec.num_actions())) {
    throw ShapeError("train_sdqn: Q-network does not match the environment");
  }
  Rng init = rng.child("init");
  Rng explore = rng.child("explore");
  Rng replay_rng = rng.child("replay");
  Rng noise_rng = rng.child("noise");
  const std::uint64_t env_key = derive_seed(rng.seed(), "env");

  SdqnResult result;
  result.denoiser = make_denoiser(spec.obs_dim, cfg.denoiser_hidden, init);
  nn::Mlp& d = result.denoiser;
  nn::Adam adam(d.num_parameters(), {.lr = cfg.lr});
  ReplayBuffer buffer(cfg.buffer_capacity);
  LossAccumulator acc;
  std::vector<envs::Transition> batch(cfg.batch_size);

  auto local = env.clone();
  std::uint64_t episode = 0;
  Vector obs = local->reset(derive_seed(env_key, episode));
  double ep_reward = 0.0;

  for (std::uint64_t step = 0; step < cfg.steps; ++step) {
    const double eps = cfg.epsilon.at(step);
    auto tr = local->step(sdqn_select_action(qnet, d, obs, eps, cfg.sigma, explore));
    ep_reward += tr.reward;
    obs = tr.next_state;
    buffer.push(std::move(tr));

    if (step + 1 >= cfg.learning_starts && (step + 1) % cfg.train_every == 0 &&
        buffer.size() >= cfg.batch_size) {
      const auto idx = buffer.sample_indices(cfg.batch_size, replay_rng);
      for (std::size_t j = 0; j < idx.size(); ++j) batch[j] = buffer.at(idx[j]);
      const SdqnLoss loss = sdqn_loss(batch, qnet, d, cfg, noise_rng);
      if (!std::isfinite(loss.total) || !all_finite(loss.grad)) {
        throw DivergenceError("S-DQN denoiser loss became non-finite", step);
      }
      adam.step(d.parameters(), loss.grad);
      result.step_loss.push_back(loss.total);
      result.step_recon.push_back(loss.recon);
      result.step_td.push_back(loss.td);
      acc.add(loss.total, loss.recon, loss.td);
    }

    if (local->done()) {
      EpisodeRecord rec{.step = step + 1, .reward = ep_reward, .epsilon = eps};
      acc.flush(rec);
      result.episodes.push_back(rec);
      ++episode;
      obs = local->reset(derive_seed(env_key, episode));
      ep_reward = 0.0;
    }
  }
  return result;
}

int sdqn_act_test(const nn::Mlp& qnet, const nn::Mlp* denoiser, std::span<const double> state,
                  const smoothing::SmoothConfig& cfg, Rng& rng) {
  return smoothing::estimate_smoothed_q(qnet, denoiser, state, cfg, rng).top_action;
}

std::string sdqn_metrics_csv(std::span<const EpisodeRecord> episodes) {
  io::CsvWriter csv({"step", "episode_reward", "loss_total", "loss_recon", "loss_td"});
  for (const auto& e : episodes) {
    csv.row({std::to_string(e.step), io::format_double(e.reward), io::format_double(e.loss_total),
             io::format_double(e.loss_recon), io::format_double(e.loss_td)});
  }
  return csv.str();
}

std::string pretrain_metrics_csv(std::span<const EpisodeRecord> episodes) {
  io::CsvWriter csv({"step", "episode_reward", "epsilon", "loss_td"});
  for (const auto& e : episodes) {
    csv.row({std::to_string(e.step), io::format_double(e.reward), io::format_double(e.epsilon),
             io::format_double(e.loss_td)});
  }
  return csv.str();
}

}  // namespace smoothrl::sdqn
