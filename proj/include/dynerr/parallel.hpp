#pragma once

#include <cstddef>
#include <functional>

namespace dynerr {

// Worker count: DYNERR_THREADS if set and positive, otherwise the hardware
// concurrency (at least 1).
std::size_t default_thread_count();

// Runs body(i) for i in [0, n) over `threads` workers with static
// contiguous chunking. Each index is processed exactly once; callers write
// results into preallocated slots, so output never depends on scheduling.
// The first exception thrown by any worker is rethrown after all join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  std::size_t threads = 0);

}  // namespace dynerr
