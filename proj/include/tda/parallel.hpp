#pragma once

#include <cstddef>
#include <functional>

namespace tda {

// Worker count: TDA_LAB_THREADS if set (min 1), else hardware concurrency.
int worker_cap();

// Runs fn(i) for i in [0, n) across worker_cap() threads with static
// chunking. fn must write only to per-index slots so that scheduling cannot
// change results. The first exception (lowest index) is rethrown on the
// caller thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace tda
