#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace smoothrl {

/// Dimension mismatch between a value and the network or environment consuming it.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A non-finite value appeared where the math requires a finite one.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss. `step` is the optimizer step (or iteration) at
/// which it was detected.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, std::uint64_t step)
      : NumericError(what), step_(step) {}
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t step_;
};

/// Checkpoint could not be parsed, has an unknown version, or is inconsistent.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace smoothrl
