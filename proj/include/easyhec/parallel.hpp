#pragma once

#include <cstddef>
#include <functional>

namespace easyhec {

// Worker cap from EASYHEC_THREADS, else hardware concurrency (>= 1).
int worker_count();

// Runs fn(i) for i in [0, n). Work is split statically across workers;
// calls made from inside a worker run serially. Callers that reduce
// results must do so by index, never by completion order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace easyhec
