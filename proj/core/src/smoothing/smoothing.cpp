#include "smoothrl/smoothing/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "smoothrl/parallel.hpp"

namespace smoothrl::smoothing {

void SmoothConfig::validate() const {
  if (!(sigma > 0.0)) throw std::invalid_argument("SmoothConfig: sigma must be > 0");
  if (m < 1) throw std::invalid_argument("SmoothConfig: m must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("SmoothConfig: alpha must be in (0,1)");
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("SmoothConfig: p must be in (0,1)");
}

int argmax(std::span<const double> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

int greedy_action(const nn::Mlp& qnet, const nn::Mlp* denoiser, std::span<const double> state) {
  if (denoiser) {
    const Vector clean = denoiser->forward(state);
    return argmax(qnet.forward(clean));
  }
  return argmax(qnet.forward(state));
}

Vector hard_q(const nn::Mlp& qnet, const nn::Mlp* denoiser, std::span<const double> state) {
  Vector out(qnet.output_dim(), 0.0);
  out[static_cast<std::size_t>(greedy_action(qnet, denoiser, state))] = 1.0;
  return out;
}

Vector noisy_state(std::span<const double> state, double sigma, std::uint64_t key,
                   std::uint64_t index) {
  Vector x(state.begin(), state.end());
  if (sigma == 0.0) return x;
  Vector noise(state.size());
  counter_normal(key, index, noise);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += sigma * noise[i];
  return x;
}

SmoothedQEstimate estimate_smoothed_q_keyed(const nn::Mlp& qnet, const nn::Mlp* denoiser,
                                            std::span<const double> state, double sigma,
                                            std::size_t m, double alpha, std::uint64_t key) {
  if (m < 1) throw std::invalid_argument("estimate_smoothed_q: m must be >= 1");
  const std::size_t n_actions = qnet.output_dim();
  std::vector<int> votes(m, 0);
  parallel_for(m, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      votes[i] = greedy_action(qnet, denoiser, noisy_state(state, sigma, key, i));
    }
  });
  SmoothedQEstimate est;
  est.m = m;
  est.alpha = alpha;
  est.counts.assign(n_actions, 0);
  for (int v : votes) ++est.counts[static_cast<std::size_t>(v)];
  est.q_est.resize(n_actions);
  for (std::size_t a = 0; a < n_actions; ++a) {
    est.q_est[a] = static_cast<double>(est.counts[a]) / static_cast<double>(m);
  }
  est.top_action = argmax(est.q_est);
  int runner = -1;
  for (std::size_t a = 0; a < n_actions; ++a) {
    if (static_cast<int>(a) == est.top_action) continue;
    if (runner < 0 || est.q_est[a] > est.q_est[static_cast<std::size_t>(runner)]) runner = static_cast<int>(a);
  }
  est.runner_up = runner < 0 ? est.top_action : runner;
  return est;
}

SmoothedQEstimate estimate_smoothed_q(const nn::Mlp& qnet, const nn::Mlp* denoiser,
                                      std::span<const double> state, const SmoothConfig& cfg,
                                      Rng& rng) {
  cfg.validate();
  return estimate_smoothed_q_keyed(qnet, denoiser, state, cfg.sigma, cfg.m, cfg.alpha, rng.next_u64());
}

double hoeffding_delta(std::size_t m, double alpha) {
  if (m < 1) throw std::invalid_argument("hoeffding_delta: m must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("hoeffding_delta: alpha must be in (0,1]");
  return std::sqrt(std::log(1.0 / alpha) / (2.0 * static_cast<double>(m)));
}

std::size_t percentile_rank(std::size_t m, double p) {
  if (m < 1) throw std::invalid_argument("percentile_rank: m must be >= 1");
  const double k = std::ceil(static_cast<double>(m) * p);
  if (k < 1.0) return 1;
  if (k > static_cast<double>(m)) return m;
  return static_cast<std::size_t>(k);
}

std::size_t percentile_index(std::span<const double> samples, double p) {
  if (samples.empty()) throw std::invalid_argument("percentile_smooth: empty sample set");
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("percentile_smooth: p must be in (0,1)");
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t k = percentile_rank(samples.size(), p);
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1), idx.end(),
                   [&](std::size_t a, std::size_t b) {
                     return samples[a] < samples[b] || (samples[a] == samples[b] && a < b);
                   });
  return idx[k - 1];
}

double percentile_smooth(std::span<const double> samples, double p) {
  return samples[percentile_index(samples, p)];
}

SmoothedMean smoothed_mean_keyed(const nn::Mlp& net, std::span<const double> state, double sigma,
                                 std::size_t m, double p, std::uint64_t key) {
  if (m < 1) throw std::invalid_argument("smoothed mean: m must be >= 1");
  SmoothedMean out;
  out.samples.resize(m);
  parallel_for(m, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out.samples[i] = net.forward(noisy_state(state, sigma, key, i));
  });
  const std::size_t dim = net.output_dim();
  out.value.resize(dim);
  out.selected.resize(dim);
  Vector column(m);
  for (std::size_t c = 0; c < dim; ++c) {
    for (std::size_t i = 0; i < m; ++i) column[i] = out.samples[i][c];
    out.selected[c] = percentile_index(column, p);
    out.value[c] = column[out.selected[c]];
  }
  return out;
}

MedianSmoothed median_smooth_policy(const nn::GaussianPolicy& policy, std::span<const double> state,
                                    const SmoothConfig& cfg, Rng& rng) {
  cfg.validate();
  const SmoothedMean mean = smoothed_mean_keyed(policy.mean_net, state, cfg.sigma, cfg.m, cfg.p, rng.next_u64());
  // The std head is state-independent, so every noisy sample yields the same std vector
  // and its percentile is that vector.
  return {mean.value, policy.stddev()};
}

Vector deterministic_smoothed_action(const nn::GaussianPolicy& policy,
                                     std::span<const double> state, const SmoothConfig& cfg,
                                     Rng& rng) {
  cfg.validate();
  return smoothed_mean_keyed(policy.mean_net, state, cfg.sigma, cfg.m, cfg.p, rng.next_u64()).value;
}

}  // namespace smoothrl::smoothing
