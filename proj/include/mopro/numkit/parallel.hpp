#pragma once

#include <cstddef>
#include <functional>

namespace mopro::numkit {

/// Worker count for row-split kernels. 1 (the default) runs everything on
/// the calling thread. Row splits never change results: each output row is
/// computed by exactly one worker in the kernel's fixed order.
void set_threads(std::size_t n);
std::size_t threads();
/// Resolves "auto" to the hardware concurrency (at least 1).
std::size_t hardware_threads();

/// Calls fn(r0, r1) over a partition of [0, n). Work below `min_rows_per_thread`
/// rows per worker stays on the calling thread.
void parallel_rows(std::size_t n, std::size_t min_rows_per_thread,
                   const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace mopro::numkit
