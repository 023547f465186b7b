#pragma once

#include <cstddef>
#include <functional>

namespace loupe {

// Worker count: KSPACE_LOUPE_THREADS when set to a positive integer, else the
// number of logical cores.
std::size_t worker_count();

// Runs fn(i) for i in [0, n) on up to worker_count() threads. Each index is
// processed exactly once; callers write results into per-index slots so the
// outcome does not depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t n, std::function<void(std::size_t)> const &fn);

} // namespace loupe
