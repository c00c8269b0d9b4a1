#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "smoothrl/nn/losses.hpp"
#include "smoothrl/nn/mlp.hpp"
#include "smoothrl/rng.hpp"
#include "smoothrl/tensor.hpp"

namespace smoothrl::smoothing {

/// Gaussian smoothing parameters shared by every estimate and certificate.
struct SmoothConfig {
  double sigma = 0.1;   // noise std, observation units
  std::size_t m = 100;  // Monte-Carlo sample count
  double alpha = 0.05;  // one-sided confidence level
  double p = 0.5;       // percentile for median/percentile smoothing

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

/// Index of the largest entry, ties to the lowest index.
int argmax(std::span<const double> values);

/// Greedy action argmax_a Q(D(state), a); the denoiser is skipped when null.
int greedy_action(const nn::Mlp& qnet, const nn::Mlp* denoiser, std::span<const double> state);

/// One-hot vector at greedy_action.
Vector hard_q(const nn::Mlp& qnet, const nn::Mlp* denoiser, std::span<const double> state);

struct SmoothedQEstimate {
  Vector q_est;                      // per-action vote fraction
  std::vector<std::size_t> counts;   // per-action vote counts, sum == m
  std::size_t m = 0;
  double alpha = 0.0;
  int top_action = 0;
  int runner_up = 0;
};

/// Monte-Carlo hard-RS estimate: fraction of noisy samples whose greedy action is a.
/// Draws one 64-bit key from rng; sample i uses counter noise (key, i).
SmoothedQEstimate estimate_smoothed_q(const nn::Mlp& qnet, const nn::Mlp* denoiser,
                                      std::span<const double> state, const SmoothConfig& cfg,
                                      Rng& rng);

/// Keyed form: identical keys give identical noise, which makes common-random-number
/// comparisons between nearby states possible.
SmoothedQEstimate estimate_smoothed_q_keyed(const nn::Mlp& qnet, const nn::Mlp* denoiser,
                                            std::span<const double> state, double sigma,
                                            std::size_t m, double alpha, std::uint64_t key);

/// sqrt(ln(1/alpha) / (2m)). Accepts alpha in (0, 1].
double hoeffding_delta(std::size_t m, double alpha);

/// 1-based rank ceil(m p), clamped to [1, m].
std::size_t percentile_rank(std::size_t m, double p);

/// The percentile_rank(m, p)-th order statistic. Throws on empty input or p outside (0,1).
double percentile_smooth(std::span<const double> samples, double p);

/// Index into `samples` of the order statistic picked by percentile_smooth (ties resolved
/// by lower index).
std::size_t percentile_index(std::span<const double> samples, double p);

struct MedianSmoothed {
  Vector mean;    // per-coordinate percentile of the mean head over noisy states
  Vector stddev;  // per-coordinate percentile of the std head
};

/// Percentile-smoothed Gaussian policy at p (median by default).
MedianSmoothed median_smooth_policy(const nn::GaussianPolicy& policy, std::span<const double> state,
                                    const SmoothConfig& cfg, Rng& rng);

/// Smoothed deterministic action: only the mean-head percentile. Consumes the rng exactly
/// like median_smooth_policy.
Vector deterministic_smoothed_action(const nn::GaussianPolicy& policy,
                                     std::span<const double> state, const SmoothConfig& cfg,
                                     Rng& rng);

/// Per-sample detail of a smoothed mean: the selected order statistic per coordinate and
/// which noisy sample produced it. sigma may be 0, in which case every sample is the clean
/// state.
struct SmoothedMean {
  Vector value;
  std::vector<std::size_t> selected;  // per coordinate, index of the winning sample
  std::vector<Vector> samples;        // network outputs, one per noise draw
};

SmoothedMean smoothed_mean_keyed(const nn::Mlp& net, std::span<const double> state, double sigma,
                                 std::size_t m, double p, std::uint64_t key);

/// The noisy input used for draw `index` under `key`: state + sigma * counter_normal.
Vector noisy_state(std::span<const double> state, double sigma, std::uint64_t key,
                   std::uint64_t index);

}  // namespace smoothrl::smoothing
