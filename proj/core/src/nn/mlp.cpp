#include "smoothrl/nn/mlp.hpp"

#include <cmath>

#include "smoothrl/error.hpp"

namespace smoothrl::nn {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "identity";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

namespace {

double activate(Activation a, double z) {
  switch (a) {
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::tanh: return std::tanh(z);
    case Activation::identity: return z;
  }
  return z;
}

// Derivative expressed through the pre-activation z and post-activation y.
double activate_grad(Activation a, double z, double y) {
  switch (a) {
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: return 1.0 - y * y;
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

}  // namespace

Mlp::Mlp(std::vector<std::size_t> dims, std::vector<Activation> activations, bool residual)
    : dims_(std::move(dims)), activations_(std::move(activations)), residual_(residual) {
  if (dims_.size() < 2 || dims_.size() != activations_.size() + 1) {
    throw ShapeError("Mlp: need dims.size() == activations.size() + 1 >= 2");
  }
  for (std::size_t d : dims_) {
    if (d == 0) throw ShapeError("Mlp: zero-width layer");
  }
  if (residual_ && dims_.front() != dims_.back()) {
    throw ShapeError("Mlp: residual network needs input_dim == output_dim");
  }
  std::size_t total = 0;
  for (std::size_t l = 0; l < activations_.size(); ++l) {
    offsets_.push_back(total);
    total += dims_[l + 1] * dims_[l] + dims_[l + 1];
  }
  params_.assign(total, 0.0);
}

Mlp Mlp::glorot(std::vector<std::size_t> dims, std::vector<Activation> activations, Rng& rng,
                bool residual) {
  Mlp net(std::move(dims), std::move(activations), residual);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(net.dims_[l] + net.dims_[l + 1]));
    for (double& w : net.weights(l)) w = rng.uniform(-limit, limit);
  }
  return net;
}

LayerShape Mlp::layer(std::size_t l) const { return {dims_[l], dims_[l + 1], activations_[l]}; }

std::span<double> Mlp::weights(std::size_t l) {
  return std::span<double>(params_).subspan(weight_offset(l), dims_[l + 1] * dims_[l]);
}
std::span<const double> Mlp::weights(std::size_t l) const {
  return std::span<const double>(params_).subspan(weight_offset(l), dims_[l + 1] * dims_[l]);
}
std::span<double> Mlp::biases(std::size_t l) {
  return std::span<double>(params_).subspan(bias_offset(l), dims_[l + 1]);
}
std::span<const double> Mlp::biases(std::size_t l) const {
  return std::span<const double>(params_).subspan(bias_offset(l), dims_[l + 1]);
}

Vector Mlp::forward(std::span<const double> x) const {
  if (x.size() != input_dim()) {
    throw ShapeError("Mlp::forward: input has " + std::to_string(x.size()) + " entries, expected " +
                     std::to_string(input_dim()));
  }
  Vector cur(x.begin(), x.end());
  Vector next;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const std::size_t in = dims_[l];
    const std::size_t out = dims_[l + 1];
    const double* w = params_.data() + weight_offset(l);
    const double* b = params_.data() + bias_offset(l);
    next.assign(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      double z = b[o];
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) z += row[i] * cur[i];
      next[o] = activate(activations_[l], z);
    }
    cur.swap(next);
  }
  if (residual_) {
    for (std::size_t i = 0; i < cur.size(); ++i) cur[i] += x[i];
  }
  return cur;
}

Vector Mlp::forward(std::span<const double> x, Tape& tape) const {
  if (x.size() != input_dim()) {
    throw ShapeError("Mlp::forward: input has " + std::to_string(x.size()) + " entries, expected " +
                     std::to_string(input_dim()));
  }
  tape.input.assign(x.begin(), x.end());
  tape.pre.resize(num_layers());
  tape.post.resize(num_layers());
  const Vector* cur = &tape.input;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const std::size_t in = dims_[l];
    const std::size_t out = dims_[l + 1];
    const double* w = params_.data() + weight_offset(l);
    const double* b = params_.data() + bias_offset(l);
    Vector& z = tape.pre[l];
    Vector& y = tape.post[l];
    z.assign(out, 0.0);
    y.assign(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * (*cur)[i];
      z[o] = acc;
      y[o] = activate(activations_[l], acc);
    }
    cur = &y;
  }
  Vector result = *cur;
  if (residual_) {
    for (std::size_t i = 0; i < result.size(); ++i) result[i] += x[i];
  }
  return result;
}

Tensor Mlp::forward(const Tensor& x) const {
  if (x.rank() == 1) return Tensor::vector(forward(std::span<const double>(x.data)));
  if (x.rank() != 2 || x.shape[1] != input_dim()) {
    throw ShapeError("Mlp::forward: tensor must have shape {input_dim} or {batch, input_dim}");
  }
  const std::size_t batch = x.shape[0];
  Vector out;
  out.reserve(batch * output_dim());
  for (std::size_t r = 0; r < batch; ++r) {
    const Vector y = forward(std::span<const double>(x.data).subspan(r * input_dim(), input_dim()));
    out.insert(out.end(), y.begin(), y.end());
  }
  return Tensor({batch, output_dim()}, std::move(out));
}

Vector Mlp::backward(const Tape& tape, std::span<const double> grad_out,
                     std::span<double> param_grad) const {
  if (grad_out.size() != output_dim()) throw ShapeError("Mlp::backward: grad_out size");
  if (!param_grad.empty() && param_grad.size() != num_parameters()) {
    throw ShapeError("Mlp::backward: param_grad size");
  }
  Vector delta(grad_out.begin(), grad_out.end());
  Vector prev_delta;
  for (std::size_t l = num_layers(); l-- > 0;) {
    const std::size_t in = dims_[l];
    const std::size_t out = dims_[l + 1];
    const Vector& z = tape.pre[l];
    const Vector& y = tape.post[l];
    const Vector& x = l == 0 ? tape.input : tape.post[l - 1];
    for (std::size_t o = 0; o < out; ++o) delta[o] *= activate_grad(activations_[l], z[o], y[o]);
    const double* w = params_.data() + weight_offset(l);
    if (!param_grad.empty()) {
      double* gw = param_grad.data() + weight_offset(l);
      double* gb = param_grad.data() + bias_offset(l);
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        gb[o] += d;
        double* row = gw + o * in;
        for (std::size_t i = 0; i < in; ++i) row[i] += d * x[i];
      }
    }
    prev_delta.assign(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) prev_delta[i] += row[i] * d;
    }
    delta.swap(prev_delta);
  }
  if (residual_) {
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += grad_out[i];
  }
  return delta;
}

LossGradient gradients(const Mlp& net, const OutputLoss& loss, std::span<const double> x) {
  Tape tape;
  const Vector out = net.forward(x, tape);
  for (const auto& layer : tape.post) {
    if (!all_finite(layer)) throw NumericError("gradients: non-finite activation");
  }
  LossGradient result;
  Vector grad_out(out.size(), 0.0);
  result.loss = loss(out, grad_out);
  if (!std::isfinite(result.loss) || !all_finite(grad_out)) {
    throw NumericError("gradients: non-finite loss or output gradient");
  }
  result.params.assign(net.num_parameters(), 0.0);
  result.input = net.backward(tape, grad_out, result.params);
  if (!all_finite(result.params) || !all_finite(result.input)) {
    throw NumericError("gradients: non-finite gradient");
  }
  return result;
}

}  // namespace smoothrl::nn
