#include "smoothrl/nn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "smoothrl/error.hpp"

namespace smoothrl::nn {

namespace {
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)
}

double huber(double eta, double zeta) {
  const double a = std::abs(eta);
  return a < zeta ? eta * eta / (2.0 * zeta) : a - zeta / 2.0;
}

double huber_grad(double eta, double zeta) {
  if (std::abs(eta) < zeta) return eta / zeta;
  return eta > 0.0 ? 1.0 : -1.0;
}

double gaussian_log_prob(const GaussianHead& head, std::span<const double> action) {
  if (head.mean.size() != action.size() || head.log_std.size() != action.size()) {
    throw ShapeError("gaussian_log_prob: dimension mismatch");
  }
  Vector stddev(head.log_std.size());
  std::transform(head.log_std.begin(), head.log_std.end(), stddev.begin(),
                 [](double s) { return std::exp(s); });
  return gaussian_log_prob(head.mean, stddev, action);
}

double gaussian_log_prob(std::span<const double> mean, std::span<const double> stddev,
                         std::span<const double> action, std::span<double> grad_mean,
                         std::span<double> grad_log_std) {
  if (mean.size() != action.size() || stddev.size() != action.size()) {
    throw ShapeError("gaussian_log_prob: dimension mismatch");
  }
  double lp = 0.0;
  for (std::size_t i = 0; i < action.size(); ++i) {
    const double s = stddev[i];
    if (!(s > 0.0)) throw NumericError("gaussian_log_prob: non-positive standard deviation");
    const double z = (action[i] - mean[i]) / s;
    lp += -0.5 * z * z - std::log(s) - kHalfLog2Pi;
    if (!grad_mean.empty()) grad_mean[i] = z / s;
    if (!grad_log_std.empty()) grad_log_std[i] = z * z - 1.0;
  }
  return lp;
}

Vector log_softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - mx);
  const double lse = mx + std::log(sum);
  Vector out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

GaussianHead GaussianPolicy::head(std::span<const double> state) const {
  return {mean_net.forward(state), log_std};
}

Vector GaussianPolicy::stddev() const {
  Vector s(log_std.size());
  std::transform(log_std.begin(), log_std.end(), s.begin(), [](double v) { return std::exp(v); });
  return s;
}

}  // namespace smoothrl::nn
