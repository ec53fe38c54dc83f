#pragma once

#include <cstddef>
#include <functional>

namespace ppfactor {

// Worker count: PPFACTOR_THREADS if set and positive, else hardware concurrency.
int thread_count();

// Overrides the environment for the current process (0 restores the default).
void set_thread_count(int n);

// Runs body(i) for i in [0, n). Each index is handled by exactly one worker, so
// results written to per-index slots do not depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace ppfactor
