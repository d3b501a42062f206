#pragma once

#include <cstddef>
#include <functional>

namespace drfn {

/// Worker count used by batch-parallel kernels. 0 selects the hardware
/// concurrency; 1 is the deterministic sequential mode.
void set_num_threads(int threads);
int num_threads();

/// Runs body(i) for i in [0, count). Work is split into contiguous chunks, one
/// per worker. Callers must make body(i) independent of every other index.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace drfn
