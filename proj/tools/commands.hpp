#pragma once

#include "run_config.hpp"

namespace diffdvr::cli {

// Runs the configured task and writes its artifacts. Returns the exit code;
// library errors propagate to the caller.
int run_task(const RunConfig& cfg);

}  // namespace diffdvr::cli
