#include "smoothrl/attacks/attacks.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "smoothrl/parallel.hpp"

namespace smoothrl::attacks {

std::string_view to_string(Norm n) { return n == Norm::l2 ? "l2" : "linf"; }

Norm norm_from_string(std::string_view s) {
  if (s == "l2") return Norm::l2;
  if (s == "linf") return Norm::linf;
  throw std::invalid_argument("unknown norm '" + std::string(s) + "' (expected l2 or linf)");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("AttackConfig: epsilon must be >= 0");
  if (steps < 1) throw std::invalid_argument("AttackConfig: steps must be >= 1");
  if (step_size < 0.0) throw std::invalid_argument("AttackConfig: step_size must be > 0");
  if (restarts < 1) throw std::invalid_argument("AttackConfig: restarts must be >= 1");
  if (sigma < 0.0) throw std::invalid_argument("AttackConfig: sigma must be >= 0");
}

double AttackConfig::effective_step() const {
  return step_size > 0.0 ? step_size : 2.0 * epsilon / static_cast<double>(steps);
}

void project(std::span<double> delta, double epsilon, Norm norm) {
  if (norm == Norm::linf) {
    for (double& d : delta) d = std::clamp(d, -epsilon, epsilon);
    return;
  }
  const double n = norm2(delta);
  if (n > epsilon) {
    const double scale = n > 0.0 ? epsilon / n : 0.0;
    for (double& d : delta) d *= scale;
  }
}

namespace {

// Moves delta by one step against (descent) or along (ascent) the gradient.
void take_step(std::span<double> delta, std::span<const double> grad, double step, Norm norm,
               double direction) {
  if (norm == Norm::linf) {
    for (std::size_t i = 0; i < delta.size(); ++i) {
      const double g = grad[i];
      const double s = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
      delta[i] += direction * step * s;
    }
    return;
  }
  const double n = norm2(grad);
  if (n == 0.0) return;
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += direction * step * grad[i] / n;
}

// Clips state + delta into the observation box and rewrites delta to the effective offset.
Vector apply(std::span<const double> state, std::span<double> delta, const AttackConfig& cfg) {
  Vector x(state.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = state[i] + delta[i];
  if (cfg.obs_box) {
    cfg.obs_box->clip(x);
    for (std::size_t i = 0; i < x.size(); ++i) delta[i] = x[i] - state[i];
  }
  return x;
}

void random_in_ball(std::span<double> delta, double epsilon, Norm norm, Rng& rng) {
  if (norm == Norm::linf) {
    for (double& d : delta) d = rng.uniform(-epsilon, epsilon);
    return;
  }
  rng.fill_normal(delta);
  const double n = norm2(delta);
  const double radius =
      epsilon * std::pow(rng.uniform(), 1.0 / static_cast<double>(delta.size()));
  for (double& d : delta) d = n > 0.0 ? d * radius / n : 0.0;
}

Vector run_pgd(const nn::Mlp& qnet, const nn::Mlp* denoiser, std::span<const double> state,
               int target, const AttackConfig& cfg, Rng& rng, double sigma) {
  cfg.validate();
  const std::size_t n = state.size();
  Vector best(state.begin(), state.end());
  if (cfg.epsilon == 0.0) return best;
  double best_obj = std::numeric_limits<double>::infinity();
  const double step = cfg.effective_step();
  Vector delta(n), grad(n), noisy(n), noise(n);
  for (int r = 0; r < cfg.restarts; ++r) {
    if (r == 0) {
      std::fill(delta.begin(), delta.end(), 0.0);
    } else {
      random_in_ball(delta, cfg.epsilon, cfg.norm, rng);
    }
    for (int k = 0; k <= cfg.steps; ++k) {
      const Vector x = apply(state, delta, cfg);
      noisy = x;
      if (sigma > 0.0) {
        rng.fill_normal(noise, sigma);
        for (std::size_t i = 0; i < n; ++i) noisy[i] += noise[i];
      }
      const double obj = ce_objective(qnet, denoiser, noisy, target, grad);
      if (obj < best_obj) {
        best_obj = obj;
        best = x;
      }
      if (k == cfg.steps) break;
      take_step(delta, grad, step, cfg.norm, -1.0);
      project(delta, cfg.epsilon, cfg.norm);
    }
  }
  return best;
}

}  // namespace

double ce_objective(const nn::Mlp& qnet, const nn::Mlp* denoiser, std::span<const double> x,
                    int target, std::span<double> grad_x) {
  nn::Tape dtape, qtape;
  const Vector y = denoiser ? denoiser->forward(x, dtape) : Vector(x.begin(), x.end());
  const Vector z = qnet.forward(y, qtape);
  const Vector ls = nn::log_softmax(z);
  const auto t = static_cast<std::size_t>(target);
  if (!grad_x.empty()) {
    Vector dz(z.size());
    for (std::size_t a = 0; a < z.size(); ++a) dz[a] = (a == t ? 1.0 : 0.0) - std::exp(ls[a]);
    Vector gy = qnet.backward(qtape, dz, {});
    Vector gx = denoiser ? denoiser->backward(dtape, gy, {}) : std::move(gy);
    std::copy(gx.begin(), gx.end(), grad_x.begin());
  }
  return ls[t];
}

Vector pgd_attack(const nn::Mlp& qnet, const nn::Mlp* denoiser, std::span<const double> state,
                  int target_action, const AttackConfig& cfg, Rng& rng) {
  return run_pgd(qnet, denoiser, state, target_action, cfg, rng, 0.0);
}

Vector s_pgd_attack(const nn::Mlp& qnet, const nn::Mlp* denoiser, std::span<const double> state,
                    int target_action, const AttackConfig& cfg, Rng& rng) {
  return run_pgd(qnet, denoiser, state, target_action, cfg, rng, cfg.sigma);
}

Vector fgsm(const Objective& objective, std::span<const double> state, double epsilon) {
  Vector grad(state.size(), 0.0);
  objective(state, grad);
  Vector x(state.begin(), state.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (grad[i] > 0.0) x[i] -= epsilon;
    if (grad[i] < 0.0) x[i] += epsilon;
  }
  return x;
}

Vector s_fgsm(const Objective& objective, std::span<const double> state, double epsilon,
              std::span<const double> noise) {
  Vector noisy(state.begin(), state.end());
  for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += noise[i];
  Vector grad(state.size(), 0.0);
  objective(noisy, grad);
  Vector x(state.begin(), state.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (grad[i] > 0.0) x[i] -= epsilon;
    if (grad[i] < 0.0) x[i] += epsilon;
  }
  return x;
}

double policy_kl(const nn::GaussianPolicy& policy, std::span<const double> reference_mean,
                 std::span<const double> x, std::span<double> grad_x) {
  nn::Tape tape;
  const Vector mu = policy.mean_net.forward(x, tape);
  Vector dmu(mu.size());
  double kl = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double inv_var = std::exp(-2.0 * policy.log_std[i]);
    const double d = mu[i] - reference_mean[i];
    kl += 0.5 * d * d * inv_var;
    dmu[i] = d * inv_var;
  }
  if (!grad_x.empty()) {
    const Vector g = policy.mean_net.backward(tape, dmu, {});
    std::copy(g.begin(), g.end(), grad_x.begin());
  }
  return kl;
}

Vector mad_attack(const nn::GaussianPolicy& policy, std::span<const double> state,
                  const AttackConfig& cfg, Rng& rng,
                  std::optional<std::span<const double>> reference_mean) {
  cfg.validate();
  const Vector clean_mean = policy.mean_net.forward(state);
  const std::span<const double> ref = reference_mean ? *reference_mean : std::span<const double>(clean_mean);
  Vector best(state.begin(), state.end());
  if (cfg.epsilon == 0.0) return best;
  double best_kl = policy_kl(policy, ref, state);
  const double step = cfg.effective_step();
  const std::size_t n = state.size();
  Vector delta(n), grad(n);
  for (int r = 0; r < cfg.restarts; ++r) {
    random_in_ball(delta, cfg.epsilon, cfg.norm, rng);
    for (int k = 0; k <= cfg.steps; ++k) {
      const Vector x = apply(state, delta, cfg);
      const double kl = policy_kl(policy, ref, x, grad);
      if (kl > best_kl) {
        best_kl = kl;
        best = x;
      }
      if (k == cfg.steps) break;
      take_step(delta, grad, step, cfg.norm, +1.0);
      project(delta, cfg.epsilon, cfg.norm);
    }
  }
  return best;
}

QAttack::QAttack(QAttackMethod method, nn::Mlp qnet, std::optional<nn::Mlp> denoiser,
                 AttackConfig cfg, std::optional<smoothing::SmoothConfig> target_smoothing)
    : method_(method),
      qnet_(std::move(qnet)),
      denoiser_(std::move(denoiser)),
      cfg_(std::move(cfg)),
      target_smoothing_(target_smoothing) {
  cfg_.validate();
}

std::string QAttack::name() const {
  switch (method_) {
    case QAttackMethod::pgd: return "pgd";
    case QAttackMethod::s_pgd: return "s-pgd";
    case QAttackMethod::fgsm: return "fgsm";
    case QAttackMethod::s_fgsm: return "s-fgsm";
  }
  return "pgd";
}

Vector QAttack::perturb(std::span<const double> obs, Rng& rng) const {
  const nn::Mlp* d = denoiser_ ? &*denoiser_ : nullptr;
  if (cfg_.epsilon == 0.0) return Vector(obs.begin(), obs.end());
  const int target = target_smoothing_
                         ? smoothing::estimate_smoothed_q(qnet_, d, obs, *target_smoothing_, rng).top_action
                         : smoothing::greedy_action(qnet_, d, obs);
  switch (method_) {
    case QAttackMethod::pgd: return pgd_attack(qnet_, d, obs, target, cfg_, rng);
    case QAttackMethod::s_pgd: return s_pgd_attack(qnet_, d, obs, target, cfg_, rng);
    case QAttackMethod::fgsm:
    case QAttackMethod::s_fgsm: {
      const Objective obj = [&](std::span<const double> x, std::span<double> g) {
        return ce_objective(qnet_, d, x, target, g);
      };
      Vector x;
      if (method_ == QAttackMethod::fgsm) {
        x = fgsm(obj, obs, cfg_.epsilon);
      } else {
        Vector noise(obs.size());
        rng.fill_normal(noise, cfg_.sigma);
        x = s_fgsm(obj, obs, cfg_.epsilon, noise);
      }
      if (cfg_.obs_box) cfg_.obs_box->clip(x);
      return x;
    }
  }
  return Vector(obs.begin(), obs.end());
}

MadAttack::MadAttack(nn::GaussianPolicy policy, AttackConfig cfg,
                     std::optional<smoothing::SmoothConfig> reference_smoothing)
    : policy_(std::move(policy)), cfg_(std::move(cfg)), reference_smoothing_(reference_smoothing) {
  cfg_.validate();
}

Vector MadAttack::perturb(std::span<const double> obs, Rng& rng) const {
  if (cfg_.epsilon == 0.0) return Vector(obs.begin(), obs.end());
  if (reference_smoothing_) {
    const Vector ref = smoothing::deterministic_smoothed_action(policy_, obs, *reference_smoothing_, rng);
    return mad_attack(policy_, obs, cfg_, rng, std::span<const double>(ref));
  }
  return mad_attack(policy_, obs, cfg_, rng);
}

RewardStats summarize(std::vector<double> rewards) {
  RewardStats s;
  s.per_episode = std::move(rewards);
  if (s.per_episode.empty()) return s;
  const double n = static_cast<double>(s.per_episode.size());
  s.mean = std::accumulate(s.per_episode.begin(), s.per_episode.end(), 0.0) / n;
  double var = 0.0;
  for (double r : s.per_episode) var += (r - s.mean) * (r - s.mean);
  s.std = std::sqrt(var / n);
  return s;
}

RewardStats run_attack_eval(const envs::Environment& env, const agents::Agent& agent,
                            const Attack& attack, int episodes, Rng& rng) {
  if (episodes < 0) throw std::invalid_argument("run_attack_eval: negative episode count");
  const std::uint64_t base = rng.next_u64();
  const std::uint64_t env_key = derive_seed(base, "env");
  const std::uint64_t agent_key = derive_seed(base, "agent");
  const std::uint64_t attack_key = derive_seed(base, "attack");
  std::vector<double> rewards(static_cast<std::size_t>(episodes), 0.0);
  parallel_for(rewards.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t e = begin; e < end; ++e) {
      auto local = env.clone();
      Rng agent_rng(derive_seed(agent_key, e));
      Rng attack_rng(derive_seed(attack_key, e));
      Vector obs = local->reset(derive_seed(env_key, e));
      double total = 0.0;
      while (!local->done()) {
        const Vector seen = attack.perturb(obs, attack_rng);
        const envs::Transition tr = local->step(agent.act(seen, agent_rng));
        total += tr.reward;
        obs = tr.next_state;
      }
      rewards[e] = total;
    }
  });
  return summarize(std::move(rewards));
}

RewardStats evaluate(const envs::Environment& env, const agents::Agent& agent, int episodes, Rng& rng) {
  return run_attack_eval(env, agent, NoAttack{}, episodes, rng);
}

}  // namespace smoothrl::attacks
