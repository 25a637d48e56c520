#pragma once

#include <cstddef>
#include <functional>

namespace mhs {

/// Worker count used by parallel_for. Defaults to the MHS_NUM_THREADS
/// environment variable, else 1.
std::size_t num_threads();
void set_num_threads(std::size_t n);

/// Runs body(i) for i in [0, count). Each index must write only its own
/// outputs; results are then independent of the schedule.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace mhs
