#pragma once
#include <cstddef>
#include <functional>

namespace sace {

// SACE_WORKERS overrides; otherwise hardware concurrency.
int default_workers();

// Runs fn(i) for i in [0, n). Tasks must write only to their own slot.
// The exception from the lowest failing index is rethrown.
void parallel_for(size_t n, const std::function<void(size_t)>& fn, int workers = 0);

}  // namespace sace
