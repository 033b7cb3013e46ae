#pragma once

#include <cstddef>
#include <functional>

namespace difflab {

// Runs fn(i) for i in [0, n) on `threads` workers (0 = hardware concurrency).
// Indices are partitioned into contiguous chunks, so as long as fn(i) only
// touches slot i of its output, the result is identical for every thread
// count.  Exceptions from workers are rethrown on the caller thread.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

int resolve_threads(int threads);

}  // namespace difflab
