#pragma once

#include <cstddef>
#include <functional>

namespace theta_stationary {

/// Worker count: THETA_STATIONARY_THREADS if set (>= 1), otherwise the
/// hardware concurrency.
std::size_t worker_count();

/// Runs body(worker, begin, end) over contiguous, statically assigned chunks
/// of [0, n). Chunk boundaries depend only on n and the worker count, and
/// each index is visited exactly once. After all workers join, the exception of
/// the lowest-indexed failing worker is rethrown.
void parallel_chunks(std::size_t n,
                     const std::function<void(std::size_t worker, std::size_t begin, std::size_t end)>& body);

}  // namespace theta_stationary
