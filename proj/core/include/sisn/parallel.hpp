#pragma once

#include <cstddef>
#include <functional>

namespace sisn {

// Worker count for numeric kernels. Initialized from SISN_THREADS (default 1).
// Kernels partition work so that every output element is produced by exactly
// one worker in a fixed order, which keeps results bitwise identical for any
// thread count.
int kernel_threads();
void set_kernel_threads(int threads);

// Calls body(i) for i in [0, count), split into contiguous chunks.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace sisn
