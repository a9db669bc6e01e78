#pragma once

#include <cstddef>
#include <functional>

namespace fracspec {

/// Number of worker threads to use for `requested` concurrent tasks. Capped by
/// the FRACSPEC_THREADS environment variable when set, otherwise by the
/// hardware concurrency.
std::size_t worker_count(std::size_t requested);

/// Runs body(i) for i in [0, count) on up to `workers` threads. Tasks are
/// claimed in index order; the first exception thrown is rethrown after all
/// workers join.
void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& body);

} // namespace fracspec
