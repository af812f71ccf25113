#pragma once

#include <cstdint>
#include <functional>

namespace lawn {

/// Global worker count used by parallel_for. Defaults to the hardware
/// concurrency; clamped to at least 1.
int max_threads();
void set_max_threads(int n);

/// Runs fn(begin, end) over a disjoint partition of [0, n). Chunk boundaries
/// are fixed per-call but which thread runs a chunk is not; callers must keep
/// all cross-chunk reductions out of fn so results are identical for any
/// thread count. Exceptions thrown inside fn are rethrown on the caller.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

/// Per-index convenience wrapper over parallel_for.
void parallel_for_each(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace lawn
