#pragma once

#include <cstdint>
#include <functional>

namespace diffdvr {

// Number of worker threads used by parallel loops. Defaults to the value of
// DIFFDVR_THREADS, falling back to the hardware concurrency.
int worker_count();
void set_worker_count(int n);

// Runs body(i) for i in [0, n). Items are handed out dynamically; callers
// must make results independent of which worker ran which item.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& body);

}  // namespace diffdvr
