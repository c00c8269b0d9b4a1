#pragma once

#include <cstddef>
#include <vector>

#include "smoothrl/envs/env.hpp"
#include "smoothrl/rng.hpp"

namespace smoothrl::sdqn {

/// Fixed-capacity ring of transitions. Once full, each push overwrites the oldest entry.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(envs::Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }

  /// i-th stored transition in storage order (not insertion order once wrapped).
  const envs::Transition& at(std::size_t i) const { return items_.at(i); }

  /// n indices drawn uniformly with replacement. Throws when empty.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<envs::Transition> items_;
};

}  // namespace smoothrl::sdqn
