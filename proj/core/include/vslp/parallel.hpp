#pragma once

#include <cstddef>
#include <functional>

namespace vslp {

/// Worker cap: the VSLP_THREADS environment variable if set and positive,
/// otherwise std::thread::hardware_concurrency().
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on up to worker_count() threads. Iterations
/// must not share mutable state. The first exception thrown is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace vslp
