#pragma once

#include <cstddef>
#include <functional>

namespace ebscore {

/// Sets the worker count used by parallel_for. 0 selects hardware concurrency.
void set_thread_count(int threads);
int thread_count();

/// Reads EBSCORE_THREADS; returns `fallback` when unset or malformed.
int thread_count_from_environment(int fallback);

/// Runs body(begin, end) over contiguous chunks of [0, count).
///
/// Chunks never share an index, so callers that write results by index get
/// output independent of the worker count. Calls made from inside a worker
/// run serially on that worker.
void parallel_for(std::size_t count, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace ebscore
