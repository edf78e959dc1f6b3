#pragma once

#include <cstddef>
#include <functional>

namespace maepde::numkit {

/// Worker count from MAEPDE_WORKERS, defaulting to the hardware concurrency.
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on up to `workers` threads. Each index is
/// visited exactly once; results must be written to per-index slots so the
/// outcome does not depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, std::size_t workers = 0);

}  // namespace maepde::numkit
