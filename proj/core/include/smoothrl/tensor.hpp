#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace smoothrl {

using Vector = std::vector<double>;

/// Dense row-major array of doubles. Invariant: product(shape) == data.size().
struct Tensor {
  std::vector<std::size_t> shape;
  Vector data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, Vector data);

  /// 1-D tensor wrapping a copy of `values`.
  static Tensor vector(std::span<const double> values);

  std::size_t rank() const { return shape.size(); }
  std::size_t size() const { return data.size(); }
  bool all_finite() const;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
double norm_inf(std::span<const double> v);
bool all_finite(std::span<const double> v);

}  // namespace smoothrl
