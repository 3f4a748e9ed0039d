#pragma once

#include <cstddef>
#include <functional>

namespace tritok {

// Worker count: TRITOK_NUM_THREADS if set and positive, otherwise the
// hardware concurrency (at least 1).
std::size_t thread_count();

// Splits [0, n) into at most thread_count() contiguous chunks and runs
// fn(worker, begin, end) for each. The partition only depends on n and the
// worker count, so per-worker reductions are reproducible run to run.
void parallel_for(std::size_t n,
                  const std::function<void(std::size_t worker, std::size_t begin, std::size_t end)>& fn);

}  // namespace tritok
