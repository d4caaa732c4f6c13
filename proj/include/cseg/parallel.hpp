#pragma once

#include <cstddef>
#include <functional>

namespace cseg {

/// Worker cap: CASCADE_SEG_THREADS when set to a positive integer, otherwise
/// the hardware concurrency.
int worker_count();

/// Runs fn(i) for i in [0, n) on up to `threads` workers. The first
/// exception thrown by any task is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, int threads = worker_count());

}  // namespace cseg
