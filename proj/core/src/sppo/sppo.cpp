#include "smoothrl/sppo/sppo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "smoothrl/error.hpp"
#include "smoothrl/io/csv.hpp"
#include "smoothrl/nn/adam.hpp"
#include "smoothrl/parallel.hpp"
#include "smoothrl/smoothing/smoothing.hpp"

namespace smoothrl::sppo {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct LogProbEval {
  double log_prob = 0.0;
  smoothing::SmoothedMean mean;
  Vector grad_mean;
  Vector grad_log_std;
};

LogProbEval eval_log_prob(const nn::GaussianPolicy& policy, std::span<const double> state,
                          std::span<const double> action, double sigma, std::size_t m, double p,
                          std::uint64_t key) {
  LogProbEval e;
  e.mean = smoothing::smoothed_mean_keyed(policy.mean_net, state, sigma, m, p, key);
  const Vector stddev = policy.stddev();
  e.grad_mean.assign(stddev.size(), 0.0);
  e.grad_log_std.assign(stddev.size(), 0.0);
  e.log_prob = nn::gaussian_log_prob(e.mean.value, stddev, action, e.grad_mean, e.grad_log_std);
  return e;
}

// Adds scale * d log_prob / d params, routing each mean coordinate into its selected sample.
void backprop_log_prob(const nn::GaussianPolicy& policy, std::span<const double> state, double sigma,
                       std::uint64_t key, const LogProbEval& e, double scale,
                       std::span<double> grad_params, std::span<double> grad_log_std) {
  if (!grad_log_std.empty()) {
    for (std::size_t c = 0; c < e.grad_log_std.size(); ++c) grad_log_std[c] += scale * e.grad_log_std[c];
  }
  if (grad_params.empty()) return;
  std::map<std::size_t, Vector> by_sample;
  for (std::size_t c = 0; c < e.grad_mean.size(); ++c) {
    Vector& g = by_sample[e.mean.selected[c]];
    if (g.empty()) g.assign(e.grad_mean.size(), 0.0);
    g[c] += scale * e.grad_mean[c];
  }
  for (const auto& [idx, g] : by_sample) {
    nn::Tape tape;
    policy.mean_net.forward(smoothing::noisy_state(state, sigma, key, idx), tape);
    policy.mean_net.backward(tape, g, grad_params);
  }
}

double objective_term(double ratio, double adv, double clip, bool& grad_active) {
  const double unclipped = ratio * adv;
  const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip) * adv;
  grad_active = unclipped <= clipped;
  return std::min(unclipped, clipped);
}

// sign * mean(min(R A, clip(R) A)).
SurrogateLoss surrogate(const AdvantageBatch& batch, const nn::GaussianPolicy& policy,
                        const PpoConfig& cfg, std::span<const std::size_t> indices, double sign) {
  batch.validate();
  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(batch.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    indices = all;
  }
  SurrogateLoss out;
  out.grad_params.assign(policy.mean_net.num_parameters(), 0.0);
  out.grad_log_std.assign(policy.log_std.size(), 0.0);
  if (indices.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(indices.size());
  std::size_t clipped = 0;
  for (std::size_t i : indices) {
    const auto e = eval_log_prob(policy, batch.states[i], batch.actions[i], cfg.sigma, cfg.m, cfg.p,
                                 batch.noise_keys[i]);
    const double ratio = std::exp(e.log_prob - batch.old_log_probs[i]);
    const double adv = batch.advantages[i];
    bool active = false;
    out.loss += sign * objective_term(ratio, adv, cfg.clip, active) * inv_n;
    out.ratios.push_back(ratio);
    if (std::abs(ratio - 1.0) > cfg.clip) ++clipped;
    if (active && adv != 0.0) {
      backprop_log_prob(policy, batch.states[i], cfg.sigma, batch.noise_keys[i], e,
                        sign * adv * ratio * inv_n, out.grad_params, out.grad_log_std);
    }
  }
  out.clip_fraction = static_cast<double>(clipped) * inv_n;
  return out;
}

nn::Mlp make_net(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Rng& rng,
                 double last_scale) {
  std::vector<std::size_t> dims{in};
  std::vector<nn::Activation> acts;
  for (std::size_t h : hidden) {
    dims.push_back(h);
    acts.push_back(nn::Activation::tanh);
  }
  dims.push_back(out);
  acts.push_back(nn::Activation::identity);
  nn::Mlp net = nn::Mlp::glorot(dims, acts, rng);
  for (double& w : net.weights(net.num_layers() - 1)) w *= last_scale;
  return net;
}

struct Collected {
  std::vector<Rollout> agent;
  std::vector<Rollout> adversary;  // true states, dp samples, negated rewards
};

Collected collect(const envs::Environment& env, const nn::GaussianPolicy& policy,
                  const PpoConfig& cfg, const nn::GaussianPolicy* adversary, double budget,
                  Rng& rng) {
  const std::uint64_t base = rng.next_u64();
  const std::uint64_t env_key = derive_seed(base, "env");
  const std::uint64_t agent_key = derive_seed(base, "agent");
  const std::uint64_t adv_key = derive_seed(base, "adversary");
  const auto k_count = static_cast<std::size_t>(cfg.trajectories);
  Collected out;
  out.agent.resize(k_count);
  if (adversary) out.adversary.resize(k_count);
  const Vector agent_std = policy.stddev();
  const Vector adv_std = adversary ? adversary->stddev() : Vector{};
  const envs::Box& box = env.spec().observation_box;

  parallel_for(k_count, [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      auto local = env.clone();
      Rng agent_rng(derive_seed(agent_key, k));
      Rng adv_rng(derive_seed(adv_key, k));
      Vector obs = local->reset(derive_seed(env_key, k));
      Rollout& ro = out.agent[k];
      while (!local->done()) {
        Vector seen = obs;
        CollectedStep adv_step;
        if (adversary) {
          adv_step.noise_key = adv_rng.next_u64();
          const auto sm = smoothing::smoothed_mean_keyed(adversary->mean_net, obs, cfg.sigma, cfg.m,
                                                         cfg.p, adv_step.noise_key);
          adv_step.sampled_action.resize(sm.value.size());
          for (std::size_t i = 0; i < sm.value.size(); ++i) {
            adv_step.sampled_action[i] = sm.value[i] + adv_std[i] * adv_rng.normal();
          }
          adv_step.log_prob = nn::gaussian_log_prob(sm.value, adv_std, adv_step.sampled_action);
          for (std::size_t i = 0; i < seen.size(); ++i) {
            seen[i] += budget * std::clamp(adv_step.sampled_action[i], -1.0, 1.0);
          }
          box.clip(seen);
        }
        CollectedStep step;
        step.noise_key = agent_rng.next_u64();
        const auto sm = smoothing::smoothed_mean_keyed(policy.mean_net, seen, cfg.sigma, cfg.m,
                                                       cfg.p, step.noise_key);
        step.sampled_action.resize(sm.value.size());
        for (std::size_t i = 0; i < sm.value.size(); ++i) {
          step.sampled_action[i] = sm.value[i] + agent_std[i] * agent_rng.normal();
        }
        step.log_prob = nn::gaussian_log_prob(sm.value, agent_std, step.sampled_action);

        const envs::Transition tr = local->step(step.sampled_action);
        if (adversary) {
          envs::Transition at = tr;
          at.state = obs;
          at.action = adv_step.sampled_action;
          at.reward = -tr.reward;
          out.adversary[k].trajectory.push(std::move(at));
          out.adversary[k].steps.push_back(std::move(adv_step));
        }
        envs::Transition seen_tr = tr;
        seen_tr.state = std::move(seen);
        ro.trajectory.push(std::move(seen_tr));
        ro.steps.push_back(std::move(step));
        obs = tr.next_state;
      }
    }
  });
  return out;
}

AdvantageBatch build_batch(const std::vector<Rollout>& rollouts, const nn::Mlp& value,
                           const PpoConfig& cfg) {
  AdvantageBatch b;
  for (const auto& ro : rollouts) {
    const GaeResult g = gae(ro.trajectory, value, cfg.gamma, cfg.gae_lambda);
    for (std::size_t t = 0; t < ro.trajectory.size(); ++t) {
      b.states.push_back(ro.trajectory.transitions[t].state);
      b.actions.push_back(ro.steps[t].sampled_action);
      b.noise_keys.push_back(ro.steps[t].noise_key);
      b.old_log_probs.push_back(ro.steps[t].log_prob);
      b.advantages.push_back(g.advantages[t]);
      b.returns.push_back(g.returns[t]);
    }
  }
  normalize_advantages(b.advantages);
  return b;
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
  return idx;
}

void check_finite(double loss, std::span<const double> g1, std::span<const double> g2,
                  const char* what, std::uint64_t iteration) {
  if (!std::isfinite(loss) || !all_finite(g1) || !all_finite(g2)) {
    throw DivergenceError(std::string(what) + " became non-finite", iteration);
  }
}

// Optimizer state for one actor/critic pair.
struct Learner {
  nn::Adam policy_opt;
  nn::Adam log_std_opt;
  nn::Adam value_opt;
};

Learner make_learner(const nn::GaussianPolicy& policy, const nn::Mlp& value, double policy_lr,
                     double value_lr) {
  return {nn::Adam(policy.mean_net.num_parameters(), {.lr = policy_lr}),
          nn::Adam(policy.log_std.size(), {.lr = policy_lr}),
          nn::Adam(value.num_parameters(), {.lr = value_lr})};
}

// Value regression then clipped-surrogate policy epochs. Returns (policy loss, value loss)
// averaged over minibatch steps. The adversary ascends its objective.
std::pair<double, double> update(nn::GaussianPolicy& policy, nn::Mlp& value, Learner& opt,
                                 const AdvantageBatch& batch, const PpoConfig& cfg, Rng& mb_rng,
                                 bool is_adversary, std::uint64_t iteration) {
  const std::size_t n = batch.size();
  if (n == 0) return {kNaN, kNaN};
  double value_sum = 0.0;
  std::size_t value_steps = 0;
  Vector vgrad(value.num_parameters());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled(n, mb_rng);
    for (std::size_t start = 0; start < n; start += cfg.minibatch) {
      const std::size_t stop = std::min(n, start + cfg.minibatch);
      const double inv = 1.0 / static_cast<double>(stop - start);
      std::fill(vgrad.begin(), vgrad.end(), 0.0);
      double loss = 0.0;
      for (std::size_t j = start; j < stop; ++j) {
        const std::size_t i = order[j];
        nn::Tape tape;
        const double v = value.forward(batch.states[i], tape)[0];
        const double diff = v - batch.returns[i];
        loss += diff * diff * inv;
        const double g = 2.0 * diff * inv;
        value.backward(tape, std::span<const double>(&g, 1), vgrad);
      }
      check_finite(loss, vgrad, {}, "value loss", iteration);
      opt.value_opt.step(value.parameters(), vgrad);
      value_sum += loss;
      ++value_steps;
    }
  }
  double policy_sum = 0.0;
  std::size_t policy_steps = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled(n, mb_rng);
    for (std::size_t start = 0; start < n; start += cfg.minibatch) {
      const std::size_t stop = std::min(n, start + cfg.minibatch);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      SurrogateLoss l = is_adversary ? smoothed_adversary_loss(batch, policy, cfg, idx)
                                     : sppo_policy_loss(batch, policy, cfg, idx);
      check_finite(l.loss, l.grad_params, l.grad_log_std,
                   is_adversary ? "adversary loss" : "policy loss", iteration);
      if (is_adversary) {
        for (double& g : l.grad_params) g = -g;
        for (double& g : l.grad_log_std) g = -g;
      }
      opt.policy_opt.step(policy.mean_net.parameters(), l.grad_params);
      opt.log_std_opt.step(policy.log_std, l.grad_log_std);
      policy_sum += l.loss;
      ++policy_steps;
    }
  }
  return {policy_steps ? policy_sum / static_cast<double>(policy_steps) : kNaN,
          value_steps ? value_sum / static_cast<double>(value_steps) : kNaN};
}

double mean_total_reward(const std::vector<Rollout>& rollouts) {
  if (rollouts.empty()) return kNaN;
  double s = 0.0;
  for (const auto& ro : rollouts) s += ro.trajectory.total_reward;
  return s / static_cast<double>(rollouts.size());
}

void require_continuous(const envs::Environment& env) {
  if (env.spec().discrete()) throw std::invalid_argument("S-PPO needs a continuous-action environment");
}

enum class Mode { agent_only, alternating, adversary_only };

PpoResult run(const envs::Environment& env, const PpoConfig& cfg, Rng& rng, Mode mode,
              const nn::GaussianPolicy* frozen_agent) {
  require_continuous(env);
  cfg.validate();
  if (mode != Mode::agent_only && !cfg.adversary_enabled) {
    throw std::invalid_argument("adversary training needs adversary_enabled");
  }
  PpoConfig net_cfg = cfg;
  net_cfg.adversary_enabled = mode != Mode::agent_only;
  PpoResult res = initial_networks(env, net_cfg, rng);
  if (frozen_agent) res.policy = *frozen_agent;

  Rng collect_rng = rng.child("collect");
  Rng mb_rng = rng.child("minibatch");
  Rng adv_mb_rng = rng.child("adversary-minibatch");
  Learner agent_opt = make_learner(res.policy, res.value, cfg.policy_lr, cfg.value_lr);
  std::optional<Learner> adv_opt;
  if (res.adversary) adv_opt = make_learner(*res.adversary, *res.adversary_value, cfg.adversary_lr, cfg.value_lr);

  for (std::uint64_t it = 0; it < cfg.iterations; ++it) {
    const nn::GaussianPolicy* adv = res.adversary ? &*res.adversary : nullptr;
    const Collected data = collect(env, res.policy, cfg, adv, cfg.adversary_budget, collect_rng);
    IterationRecord rec{.iteration = it, .mean_reward = mean_total_reward(data.agent),
                        .policy_loss = kNaN, .value_loss = kNaN, .adversary_loss = kNaN};
    if (mode != Mode::adversary_only) {
      const AdvantageBatch batch = build_batch(data.agent, res.value, cfg);
      std::tie(rec.policy_loss, rec.value_loss) =
          update(res.policy, res.value, agent_opt, batch, cfg, mb_rng, false, it);
    }
    if (adv) {
      const AdvantageBatch batch = build_batch(data.adversary, *res.adversary_value, cfg);
      rec.adversary_loss =
          update(*res.adversary, *res.adversary_value, *adv_opt, batch, cfg, adv_mb_rng, true, it).first;
    }
    res.iterations.push_back(rec);
  }
  return res;
}

}  // namespace

void PpoConfig::validate() const {
  if (!(clip > 0.0 && clip < 1.0)) throw std::invalid_argument("clip must be in (0,1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in (0,1]");
  if (!(gae_lambda > 0.0 && gae_lambda <= 1.0)) throw std::invalid_argument("gae_lambda must be in (0,1]");
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
  if (m < 1) throw std::invalid_argument("m must be >= 1");
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("p must be in (0,1)");
  if (trajectories < 0) throw std::invalid_argument("trajectories must be >= 0");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (minibatch < 1) throw std::invalid_argument("minibatch must be >= 1");
  if (!(policy_lr > 0.0) || !(value_lr > 0.0) || !(adversary_lr > 0.0)) {
    throw std::invalid_argument("learning rates must be > 0");
  }
  if (!(adversary_budget >= 0.0)) throw std::invalid_argument("adversary_budget must be >= 0");
}

void AdvantageBatch::validate() const {
  const std::size_t n = states.size();
  if (actions.size() != n || noise_keys.size() != n || old_log_probs.size() != n ||
      advantages.size() != n || returns.size() != n) {
    throw ShapeError("AdvantageBatch: columns have different lengths");
  }
}

double smoothed_log_prob(const nn::GaussianPolicy& policy, std::span<const double> state,
                         std::span<const double> action, double sigma, std::size_t m, double p,
                         std::uint64_t key, std::span<double> grad_params,
                         std::span<double> grad_log_std, double scale) {
  const auto e = eval_log_prob(policy, state, action, sigma, m, p, key);
  backprop_log_prob(policy, state, sigma, key, e, scale, grad_params, grad_log_std);
  return e.log_prob;
}

std::vector<Rollout> collect_trajectories(const envs::Environment& env,
                                          const nn::GaussianPolicy& policy, const PpoConfig& cfg,
                                          Rng& rng) {
  require_continuous(env);
  cfg.validate();
  return collect(env, policy, cfg, nullptr, 0.0, rng).agent;
}

GaeResult gae(const envs::Trajectory& trajectory, const nn::Mlp& value_net, double gamma,
              double lambda) {
  const auto& tr = trajectory.transitions;
  const std::size_t n = tr.size();
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  if (n == 0) return out;
  Vector values(n + 1, 0.0);
  for (std::size_t t = 0; t < n; ++t) values[t] = value_net.forward(tr[t].state)[0];
  values[n] = tr.back().terminal ? 0.0 : value_net.forward(tr.back().next_state)[0];
  double running = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double next_v = (t + 1 == n) ? values[n] : values[t + 1];
    const double delta = tr[t].reward + gamma * next_v - values[t];
    running = delta + gamma * lambda * running;
    out.advantages[t] = running;
    out.returns[t] = running + values[t];
  }
  return out;
}

void normalize_advantages(std::span<double> advantages) {
  if (advantages.empty()) return;
  const double n = static_cast<double>(advantages.size());
  double mean = 0.0;
  for (double a : advantages) mean += a;
  mean /= n;
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  var /= n;
  const double sd = std::sqrt(var);
  for (double& a : advantages) a = sd > 1e-12 ? (a - mean) / sd : a - mean;
}

SurrogateLoss sppo_policy_loss(const AdvantageBatch& batch, const nn::GaussianPolicy& policy,
                               const PpoConfig& cfg, std::span<const std::size_t> indices) {
  return surrogate(batch, policy, cfg, indices, -1.0);
}

SurrogateLoss smoothed_adversary_loss(const AdvantageBatch& batch,
                                      const nn::GaussianPolicy& adversary, const PpoConfig& cfg,
                                      std::span<const std::size_t> indices) {
  return surrogate(batch, adversary, cfg, indices, 1.0);
}

double clipped_surrogate(std::span<const double> ratios, std::span<const double> advantages,
                         double clip) {
  if (ratios.size() != advantages.size()) throw ShapeError("clipped_surrogate: length mismatch");
  if (ratios.empty()) return 0.0;
  double s = 0.0;
  bool ignored = false;
  for (std::size_t i = 0; i < ratios.size(); ++i) s += objective_term(ratios[i], advantages[i], clip, ignored);
  return s / static_cast<double>(ratios.size());
}

double unclipped_surrogate(std::span<const double> ratios, std::span<const double> advantages) {
  if (ratios.size() != advantages.size()) throw ShapeError("unclipped_surrogate: length mismatch");
  if (ratios.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) s += ratios[i] * advantages[i];
  return s / static_cast<double>(ratios.size());
}

PpoResult initial_networks(const envs::Environment& env, const PpoConfig& cfg, const Rng& rng) {
  require_continuous(env);
  const auto& spec = env.spec();
  Rng init = rng.child("init");
  PpoResult res;
  res.policy.mean_net = make_net(spec.obs_dim, cfg.hidden, spec.action_dim(), init, 0.01);
  res.policy.log_std.assign(spec.action_dim(), cfg.init_log_std);
  res.value = make_net(spec.obs_dim, cfg.hidden, 1, init, 1.0);
  if (cfg.adversary_enabled) {
    Rng adv_init = rng.child("adversary-init");
    nn::GaussianPolicy adv;
    adv.mean_net = make_net(spec.obs_dim, cfg.hidden, spec.obs_dim, adv_init, 0.01);
    adv.log_std.assign(spec.obs_dim, cfg.init_log_std);
    res.adversary = std::move(adv);
    res.adversary_value = make_net(spec.obs_dim, cfg.hidden, 1, adv_init, 1.0);
  }
  return res;
}

PpoResult train_sppo(const envs::Environment& env, const PpoConfig& cfg, Rng& rng) {
  return run(env, cfg, rng, Mode::agent_only, nullptr);
}

PpoResult train_s_atla(const envs::Environment& env, const PpoConfig& cfg, Rng& rng) {
  return run(env, cfg, rng, Mode::alternating, nullptr);
}

PpoResult train_adversary(const envs::Environment& env, const nn::GaussianPolicy& agent,
                          const PpoConfig& cfg, Rng& rng) {
  return run(env, cfg, rng, Mode::adversary_only, &agent);
}

AdversaryAttack::AdversaryAttack(nn::GaussianPolicy adversary, double budget, double sigma,
                                 std::size_t m, std::optional<envs::Box> obs_box)
    : adversary_(std::move(adversary)), budget_(budget), sigma_(sigma), m_(m), obs_box_(std::move(obs_box)) {
  if (!(budget >= 0.0)) throw std::invalid_argument("AdversaryAttack: budget must be >= 0");
  if (m < 1) throw std::invalid_argument("AdversaryAttack: m must be >= 1");
}

Vector AdversaryAttack::perturb(std::span<const double> obs, Rng& rng) const {
  const auto dp = smoothing::smoothed_mean_keyed(adversary_.mean_net, obs, sigma_, m_, 0.5, rng.next_u64());
  Vector x(obs.begin(), obs.end());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += budget_ * std::clamp(dp.value[i], -1.0, 1.0);
  if (obs_box_) obs_box_->clip(x);
  return x;
}

std::string ppo_metrics_csv(std::span<const IterationRecord> iterations) {
  io::CsvWriter csv({"iteration", "mean_reward", "policy_loss", "value_loss", "adversary_loss"});
  for (const auto& r : iterations) {
    csv.row({std::to_string(r.iteration), io::format_double(r.mean_reward),
             io::format_double(r.policy_loss), io::format_double(r.value_loss),
             io::format_double(r.adversary_loss)});
  }
  return csv.str();
}

}  // namespace smoothrl::sppo
