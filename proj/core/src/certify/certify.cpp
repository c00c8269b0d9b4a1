#include "smoothrl/certify/certify.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "smoothrl/certify/normal.hpp"
#include "smoothrl/io/csv.hpp"
#include "smoothrl/parallel.hpp"

namespace smoothrl::certify {

using smoothing::hoeffding_delta;
using smoothing::SmoothConfig;

namespace {

double clamp_prob(double p, bool& fired) {
  if (p < kProbFloor) {
    fired = true;
    return kProbFloor;
  }
  if (p > 1.0 - kProbFloor) {
    fired = true;
    return 1.0 - kProbFloor;
  }
  return p;
}

double clamp_prob(double p) {
  bool ignored = false;
  return clamp_prob(p, ignored);
}

// Raw rank ceil(m p) before clamping into [1, m].
double raw_rank(std::size_t m, double p) { return std::ceil(static_cast<double>(m) * p); }

// A level inside the outermost order-statistic cell (below 1/m or above (m-1)/m) has no
// sample resolving it; the clamped rank would silently report the sample extreme.
bool below_resolution(std::size_t m, double p) { return static_cast<double>(m) * p < 1.0; }
bool above_resolution(std::size_t m, double p) {
  return static_cast<double>(m) * p > static_cast<double>(m) - 1.0;
}

RadiusCertificate radius_from_levels(double lo, double hi, const SmoothConfig& cfg) {
  RadiusCertificate c;
  c.m = cfg.m;
  c.alpha = cfg.alpha;
  c.sigma = cfg.sigma;
  if (lo < hi) return c;
  if (lo == hi) {
    c.radius = 0.0;
    return c;
  }
  c.radius = 0.5 * cfg.sigma * (normal_inv_cdf(clamp_prob(lo)) - normal_inv_cdf(clamp_prob(hi)));
  return c;
}

}  // namespace

RadiusCertificate certified_radius_hard(double q1_est, double q2_est, const SmoothConfig& cfg) {
  cfg.validate();
  if (q1_est < q2_est) throw std::invalid_argument("certified_radius_hard: need q1_est >= q2_est");
  const double delta = hoeffding_delta(cfg.m, cfg.alpha);
  RadiusCertificate c = radius_from_levels(q1_est - delta, q2_est + delta, cfg);
  c.q1_est = q1_est;
  c.q2_est = q2_est;
  c.method = RadiusMethod::hard;
  return c;
}

RadiusCertificate certified_radius_crop(double q1, double q2, double v_min, double v_max,
                                        const SmoothConfig& cfg) {
  cfg.validate();
  if (!(v_min < v_max)) throw std::invalid_argument("certified_radius_crop: need v_min < v_max");
  const double range = v_max - v_min;
  const double delta = range * hoeffding_delta(cfg.m, cfg.alpha);
  RadiusCertificate c =
      radius_from_levels((q1 - delta - v_min) / range, (q2 + delta - v_min) / range, cfg);
  c.q1_est = q1;
  c.q2_est = q2;
  c.method = RadiusMethod::crop;
  c.v_min = v_min;
  c.v_max = v_max;
  return c;
}

RadiusCertificate certify_state(const nn::Mlp& qnet, const nn::Mlp* denoiser,
                                std::span<const double> state, const SmoothConfig& cfg, Rng& rng) {
  const auto est = smoothing::estimate_smoothed_q(qnet, denoiser, state, cfg, rng);
  const double q1 = est.q_est[static_cast<std::size_t>(est.top_action)];
  const double q2 = est.runner_up == est.top_action ? 0.0 : est.q_est[static_cast<std::size_t>(est.runner_up)];
  RadiusCertificate c = certified_radius_hard(q1, q2, cfg);
  c.top_action = est.top_action;
  return c;
}

RadiusCertificate certify_state_crop(const nn::Mlp& qnet, const nn::Mlp* denoiser,
                                     std::span<const double> state, double v_min, double v_max,
                                     const SmoothConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::uint64_t key = rng.next_u64();
  const std::size_t n_actions = qnet.output_dim();
  std::vector<Vector> rows(cfg.m);
  parallel_for(cfg.m, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Vector x = smoothing::noisy_state(state, cfg.sigma, key, i);
      rows[i] = denoiser ? qnet.forward(denoiser->forward(x)) : qnet.forward(x);
    }
  });
  Vector mean(n_actions, 0.0);
  for (const auto& r : rows) {
    for (std::size_t a = 0; a < n_actions; ++a) mean[a] += std::clamp(r[a], v_min, v_max);
  }
  for (double& v : mean) v /= static_cast<double>(cfg.m);
  const int top = smoothing::argmax(mean);
  double second = v_min;
  for (std::size_t a = 0; a < n_actions; ++a) {
    if (static_cast<int>(a) != top) second = std::max(second, mean[a]);
  }
  RadiusCertificate c = certified_radius_crop(mean[static_cast<std::size_t>(top)], second, v_min, v_max, cfg);
  c.top_action = top;
  return c;
}

bool action_bound_levels(double p, double delta, double epsilon_over_sigma, double& p_lower,
                         double& p_upper) {
  bool fired = false;
  const double lo = clamp_prob(p - delta, fired);
  const double hi = clamp_prob(p + delta, fired);
  p_lower = normal_cdf(normal_inv_cdf(lo) - epsilon_over_sigma);
  p_upper = normal_cdf(normal_inv_cdf(hi) + epsilon_over_sigma);
  return !fired;
}

ActionBoundResult action_bound_from_samples(std::span<const Vector> samples, double epsilon_l2,
                                            const SmoothConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw std::invalid_argument("action_bound: no samples");
  if (epsilon_l2 < 0.0) throw std::invalid_argument("action_bound: epsilon must be >= 0");
  ActionBoundResult r;
  r.p = cfg.p;
  r.epsilon = epsilon_l2;
  r.sigma = cfg.sigma;
  r.m = samples.size();
  r.alpha = cfg.alpha;
  const double delta = hoeffding_delta(r.m, cfg.alpha);
  r.certified = action_bound_levels(cfg.p, delta, epsilon_l2 / cfg.sigma, r.p_lower, r.p_upper);
  const double k_lo = raw_rank(r.m, r.p_lower);
  const double k_hi = raw_rank(r.m, r.p_upper);
  if (below_resolution(r.m, r.p_lower) || above_resolution(r.m, r.p_upper)) r.certified = false;
  const std::size_t lo_rank = static_cast<std::size_t>(std::clamp(k_lo, 1.0, static_cast<double>(r.m)));
  const std::size_t hi_rank = static_cast<std::size_t>(std::clamp(k_hi, 1.0, static_cast<double>(r.m)));
  const std::size_t dim = samples.front().size();
  r.lower.resize(dim);
  r.upper.resize(dim);
  Vector column(r.m);
  for (std::size_t c = 0; c < dim; ++c) {
    for (std::size_t i = 0; i < r.m; ++i) column[i] = samples[i][c];
    std::sort(column.begin(), column.end());
    r.lower[c] = column[lo_rank - 1];
    r.upper[c] = column[hi_rank - 1];
  }
  return r;
}

ActionBoundResult action_bound(const nn::GaussianPolicy& policy, std::span<const double> state,
                               double epsilon_l2, const SmoothConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto smoothed =
      smoothing::smoothed_mean_keyed(policy.mean_net, state, cfg.sigma, cfg.m, cfg.p, rng.next_u64());
  return action_bound_from_samples(smoothed.samples, epsilon_l2, cfg);
}

RewardBoundResult reward_bound_from_returns(std::vector<double> returns, double budget,
                                            const SmoothConfig& cfg) {
  cfg.validate();
  if (returns.empty()) throw std::invalid_argument("reward bound: no returns");
  if (budget < 0.0) throw std::invalid_argument("reward bound: budget must be >= 0");
  RewardBoundResult r;
  r.budget = budget;
  r.p = cfg.p;
  r.m_tau = returns.size();
  r.alpha = cfg.alpha;
  r.sigma = cfg.sigma;
  const double delta = hoeffding_delta(r.m_tau, cfg.alpha);
  bool fired = false;
  const double lo = clamp_prob(cfg.p - delta, fired);
  r.p_lower = normal_cdf(normal_inv_cdf(lo) - budget / cfg.sigma);
  const double k = raw_rank(r.m_tau, r.p_lower);
  r.returns = std::move(returns);
  if (fired || below_resolution(r.m_tau, r.p_lower)) return r;
  Vector sorted = r.returns;
  std::sort(sorted.begin(), sorted.end());
  r.bound = sorted[static_cast<std::size_t>(k) - 1];
  return r;
}

RewardBoundResult reward_lower_bound(const envs::Environment& env, const agents::Agent& noisy_agent,
                                     double budget, const SmoothConfig& cfg, std::size_t m_tau,
                                     Rng& rng) {
  cfg.validate();
  if (m_tau < 1) throw std::invalid_argument("reward bound: m_tau must be >= 1");
  const std::uint64_t base = rng.next_u64();
  const std::uint64_t env_key = derive_seed(base, "env");
  const std::uint64_t agent_key = derive_seed(base, "agent");
  std::vector<double> returns(m_tau, 0.0);
  parallel_for(m_tau, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto local = env.clone();
      Rng agent_rng(derive_seed(agent_key, i));
      Vector obs = local->reset(derive_seed(env_key, i));
      double total = 0.0;
      while (!local->done()) {
        const auto tr = local->step(noisy_agent.act(obs, agent_rng));
        total += tr.reward;
        obs = tr.next_state;
      }
      returns[i] = total;
    }
  });
  return reward_bound_from_returns(std::move(returns), budget, cfg);
}

AdivResult adiv(const nn::GaussianPolicy& policy, const envs::Environment& env,
                const SmoothConfig& cfg, std::span<const double> epsilons, int trajectories,
                Rng& rng) {
  cfg.validate();
  if (epsilons.empty()) throw std::invalid_argument("adiv: no budgets given");
  for (double e : epsilons) {
    if (!(e > 0.0)) throw std::invalid_argument("adiv: budgets must be > 0");
  }
  const std::uint64_t base = rng.next_u64();
  const std::uint64_t env_key = derive_seed(base, "env");
  const std::uint64_t act_key = derive_seed(base, "act");
  const std::uint64_t bound_key = derive_seed(base, "bound");
  struct Partial {
    double sum = 0.0;
    std::size_t evaluated = 0;
    std::size_t skipped = 0;
  };
  std::vector<Partial> partial(static_cast<std::size_t>(std::max(trajectories, 0)));
  parallel_for(partial.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      auto local = env.clone();
      Rng act_rng(derive_seed(act_key, k));
      Rng bound_rng(derive_seed(bound_key, k));
      Vector obs = local->reset(derive_seed(env_key, k));
      while (!local->done()) {
        for (double eps : epsilons) {
          const auto b = action_bound(policy, obs, eps, cfg, bound_rng);
          if (!b.certified) {
            ++partial[k].skipped;
            continue;
          }
          Vector width(b.upper.size());
          for (std::size_t i = 0; i < width.size(); ++i) width[i] = b.upper[i] - b.lower[i];
          partial[k].sum += norm2(width) / (2.0 * eps);
          ++partial[k].evaluated;
        }
        const Vector a = smoothing::deterministic_smoothed_action(policy, obs, cfg, act_rng);
        obs = local->step(a).next_state;
      }
    }
  });
  AdivResult r;
  double sum = 0.0;
  for (const auto& p : partial) {
    sum += p.sum;
    r.evaluated += p.evaluated;
    r.skipped += p.skipped;
  }
  if (r.evaluated == 0) {
    throw std::runtime_error("adiv: every state was uncertified (" + std::to_string(r.skipped) +
                             " skipped); increase m or alpha");
  }
  r.adiv = sum / static_cast<double>(r.evaluated);
  return r;
}

nlohmann::json to_json(const RadiusCertificate& c) {
  nlohmann::json j;
  j["radius"] = c.radius ? nlohmann::json(*c.radius) : nlohmann::json(nullptr);
  j["certified"] = c.certified();
  j["top_action"] = c.top_action;
  j["q1_est"] = c.q1_est;
  j["q2_est"] = c.q2_est;
  j["m"] = c.m;
  j["alpha"] = c.alpha;
  j["sigma"] = c.sigma;
  j["method"] = c.method == RadiusMethod::hard ? "hard" : "crop";
  if (c.method == RadiusMethod::crop) {
    j["v_min"] = c.v_min.value_or(0.0);
    j["v_max"] = c.v_max.value_or(0.0);
  }
  return j;
}

nlohmann::json to_json(const ActionBoundResult& r) {
  return {{"lower", r.lower}, {"upper", r.upper},     {"p", r.p},
          {"p_lower", r.p_lower}, {"p_upper", r.p_upper}, {"epsilon", r.epsilon},
          {"sigma", r.sigma},     {"m", r.m},             {"alpha", r.alpha},
          {"certified", r.certified}};
}

nlohmann::json to_json(const RewardBoundResult& r, bool include_returns) {
  nlohmann::json j;
  j["bound"] = r.bound ? nlohmann::json(*r.bound) : nlohmann::json(nullptr);
  j["certified"] = r.certified();
  j["B"] = r.budget;
  j["p"] = r.p;
  j["p_lower"] = r.p_lower;
  j["m_tau"] = r.m_tau;
  j["alpha"] = r.alpha;
  j["sigma"] = r.sigma;
  if (include_returns) j["returns"] = r.returns;
  return j;
}

nlohmann::json to_json(const AdivResult& r) {
  return {{"adiv", r.adiv}, {"evaluated", r.evaluated}, {"skipped", r.skipped}};
}

std::string radius_table_csv(std::span<const RadiusCertificate> certs) {
  io::CsvWriter csv({"index", "method", "top_action", "q1_est", "q2_est", "m", "alpha", "sigma", "radius"});
  for (std::size_t i = 0; i < certs.size(); ++i) {
    const auto& c = certs[i];
    csv.row({std::to_string(i), c.method == RadiusMethod::hard ? "hard" : "crop",
             std::to_string(c.top_action), io::format_double(c.q1_est), io::format_double(c.q2_est),
             std::to_string(c.m), io::format_double(c.alpha), io::format_double(c.sigma),
             c.radius ? io::format_double(*c.radius) : "uncertified"});
  }
  return csv.str();
}

std::string action_bound_table_csv(std::span<const ActionBoundResult> bounds) {
  const std::size_t dim = bounds.empty() ? 0 : bounds.front().lower.size();
  std::vector<std::string> header{"index", "epsilon", "p_lower", "p_upper", "certified"};
  for (std::size_t i = 0; i < dim; ++i) header.push_back("lower" + std::to_string(i));
  for (std::size_t i = 0; i < dim; ++i) header.push_back("upper" + std::to_string(i));
  io::CsvWriter csv(header);
  for (std::size_t k = 0; k < bounds.size(); ++k) {
    const auto& b = bounds[k];
    std::vector<std::string> row{std::to_string(k), io::format_double(b.epsilon),
                                 io::format_double(b.p_lower), io::format_double(b.p_upper),
                                 b.certified ? "1" : "0"};
    for (double v : b.lower) row.push_back(io::format_double(v));
    for (double v : b.upper) row.push_back(io::format_double(v));
    csv.row(row);
  }
  return csv.str();
}

}  // namespace smoothrl::certify
