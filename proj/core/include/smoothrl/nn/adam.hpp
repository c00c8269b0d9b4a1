#pragma once

#include <cstddef>
#include <span>

#include "smoothrl/tensor.hpp"

namespace smoothrl::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Moment buffers start at zero; step() increments t before use.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t num_params, AdamConfig config);

  void step(std::span<double> params, std::span<const double> grads);

  std::size_t t() const { return t_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

 private:
  AdamConfig config_;
  Vector m_;
  Vector v_;
  std::size_t t_ = 0;
};

}  // namespace smoothrl::nn
