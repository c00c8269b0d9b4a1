#include "smoothrl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "smoothrl/error.hpp"

namespace smoothrl {

Tensor::Tensor(std::vector<std::size_t> shape_, Vector data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
  const std::size_t expected =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  if (expected != data.size()) {
    throw ShapeError("tensor shape product " + std::to_string(expected) +
                     " does not match data length " + std::to_string(data.size()));
  }
}

Tensor Tensor::vector(std::span<const double> values) {
  return Tensor({values.size()}, Vector(values.begin(), values.end()));
}

bool Tensor::all_finite() const { return smoothrl::all_finite(data); }

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double norm_inf(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace smoothrl
