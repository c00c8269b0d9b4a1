#pragma once

namespace smoothrl::certify {

/// Standard normal CDF.
double normal_cdf(double x);

/// Inverse standard normal CDF for p in (0,1); throws std::domain_error otherwise.
/// Rational initial guess refined by one Halley step, absolute error well below 1e-9.
double normal_inv_cdf(double p);

}  // namespace smoothrl::certify
