#pragma once

#include <cstddef>
#include <functional>

namespace pointview {

/// Worker count from POINTVIEW_THREADS (unset or 0 = hardware concurrency).
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on up to `workers` threads. Each index runs
/// exactly once; callers write results into slot i so output order never
/// depends on scheduling. If bodies throw, the exception from the smallest
/// failing index is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  std::size_t workers = worker_count());

}  // namespace pointview
