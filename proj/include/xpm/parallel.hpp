#pragma once

#include <cstddef>
#include <functional>

namespace xpm {

/// Worker count from XPM_THREADS (falls back to hardware concurrency, min 1).
std::size_t thread_count();

/// Runs body(i) for i in [0, n) over up to `threads` workers (0 = thread_count()).
/// Indices are split into contiguous chunks; callers write results into
/// per-index slots so output never depends on scheduling. The first
/// exception thrown by any worker is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, std::size_t threads = 0);

}  // namespace xpm
