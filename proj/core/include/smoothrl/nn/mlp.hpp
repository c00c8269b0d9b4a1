#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smoothrl/rng.hpp"
#include "smoothrl/tensor.hpp"

namespace smoothrl::nn {

enum class Activation { relu, tanh, identity };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation activation = Activation::identity;
};

/// Per-layer intermediates recorded by a forward pass, consumed by backward().
struct Tape {
  Vector input;
  std::vector<Vector> pre;   // pre-activation of each layer
  std::vector<Vector> post;  // post-activation of each layer
};

/// Sequential dense network. All parameters live in one flat buffer laid out layer by
/// layer as [weights (out x in, row-major), bias (out)], so optimizers and checkpoints
/// see a single span.
///
/// A residual network adds its input to the last layer's output and requires
/// input_dim == output_dim.
class Mlp {
 public:
  Mlp() = default;

  /// Zero-initialized network. dims has one more entry than activations.
  Mlp(std::vector<std::size_t> dims, std::vector<Activation> activations, bool residual = false);

  /// Uniform init in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  static Mlp glorot(std::vector<std::size_t> dims, std::vector<Activation> activations, Rng& rng,
                    bool residual = false);

  std::size_t input_dim() const { return dims_.empty() ? 0 : dims_.front(); }
  std::size_t output_dim() const { return dims_.empty() ? 0 : dims_.back(); }
  std::size_t num_layers() const { return activations_.size(); }
  std::size_t num_parameters() const { return params_.size(); }
  bool residual() const { return residual_; }
  const std::vector<std::size_t>& dims() const { return dims_; }
  const std::vector<Activation>& activations() const { return activations_; }
  LayerShape layer(std::size_t l) const;

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::span<double> weights(std::size_t l);
  std::span<const double> weights(std::size_t l) const;
  std::span<double> biases(std::size_t l);
  std::span<const double> biases(std::size_t l) const;

  Vector forward(std::span<const double> x) const;
  Vector forward(std::span<const double> x, Tape& tape) const;

  /// Accepts shape {input_dim} or {batch, input_dim}.
  Tensor forward(const Tensor& x) const;

  /// Reverse pass for d(loss)/d(output) = grad_out. Adds parameter gradients into
  /// param_grad when it is non-empty (length num_parameters()), and returns
  /// d(loss)/d(input).
  Vector backward(const Tape& tape, std::span<const double> grad_out,
                  std::span<double> param_grad) const;

  bool operator==(const Mlp&) const = default;

 private:
  std::size_t weight_offset(std::size_t l) const { return offsets_[l]; }
  std::size_t bias_offset(std::size_t l) const { return offsets_[l] + dims_[l + 1] * dims_[l]; }

  std::vector<std::size_t> dims_;
  std::vector<Activation> activations_;
  std::vector<std::size_t> offsets_;
  Vector params_;
  bool residual_ = false;
};

/// Scalar loss of the network output: returns the value and writes d(loss)/d(output).
using OutputLoss = std::function<double(std::span<const double> out, std::span<double> grad_out)>;

struct LossGradient {
  double loss = 0.0;
  Vector params;  // d(loss)/d(parameters)
  Vector input;   // d(loss)/d(input)
};

/// Exact reverse-mode gradient of loss(net(x)). Throws NumericError on a non-finite
/// intermediate.
LossGradient gradients(const Mlp& net, const OutputLoss& loss, std::span<const double> x);

}  // namespace smoothrl::nn
