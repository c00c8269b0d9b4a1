#pragma once

#include <cstddef>
#include <functional>

namespace smoothrl {

/// Process-wide worker count for embarrassingly parallel loops (default 1).
void set_num_threads(int n);
int num_threads();

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunk boundaries depend only
/// on n and the worker count; callers that write results by index get output that is
/// independent of scheduling. Exceptions from workers are rethrown on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace smoothrl
