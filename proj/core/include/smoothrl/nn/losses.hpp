#pragma once

#include <span>

#include "smoothrl/nn/mlp.hpp"
#include "smoothrl/tensor.hpp"

namespace smoothrl::nn {

/// Huber loss with threshold zeta: eta^2 / (2 zeta) inside |eta| < zeta, |eta| - zeta/2 outside.
double huber(double eta, double zeta = 1.0);
/// d huber / d eta.
double huber_grad(double eta, double zeta = 1.0);

/// Diagonal Gaussian over actions; std = exp(log_std).
struct GaussianHead {
  Vector mean;
  Vector log_std;
};

/// Sum of per-coordinate Gaussian log densities. Throws if a std is not positive or
/// dimensions disagree.
double gaussian_log_prob(const GaussianHead& head, std::span<const double> action);

/// Same density parameterized by std directly (std > 0). Writes d/d(mean) and
/// d/d(log std) when the spans are non-empty.
double gaussian_log_prob(std::span<const double> mean, std::span<const double> stddev,
                         std::span<const double> action, std::span<double> grad_mean = {},
                         std::span<double> grad_log_std = {});

/// Numerically stable log-softmax.
Vector log_softmax(std::span<const double> logits);

/// Gaussian policy with a state-dependent mean network and a state-independent
/// learned log-std vector.
struct GaussianPolicy {
  Mlp mean_net;
  Vector log_std;

  std::size_t obs_dim() const { return mean_net.input_dim(); }
  std::size_t action_dim() const { return mean_net.output_dim(); }
  GaussianHead head(std::span<const double> state) const;
  Vector stddev() const;

  bool operator==(const GaussianPolicy&) const = default;
};

}  // namespace smoothrl::nn
