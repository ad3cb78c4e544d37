#include "mopro/numkit/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace mopro::numkit {
namespace {
std::atomic<std::size_t> g_threads{1};
}

void set_threads(std::size_t n) { g_threads.store(std::max<std::size_t>(n, 1)); }

std::size_t threads() { return g_threads.load(); }

std::size_t hardware_threads() {
  return std::max<std::size_t>(std::thread::hardware_concurrency(), 1);
}

void parallel_rows(std::size_t n, std::size_t min_rows_per_thread,
                   const std::function<void(std::size_t, std::size_t)>& fn) {
  const std::size_t workers =
      std::min(threads(), std::max<std::size_t>(n / std::max<std::size_t>(min_rows_per_thread, 1), 1));
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t r0 = w * chunk;
    const std::size_t r1 = std::min(n, r0 + chunk);
    if (r0 < r1) pool.emplace_back([&fn, r0, r1] { fn(r0, r1); });
  }
  fn(0, std::min(n, chunk));
}

}  // namespace mopro::numkit
