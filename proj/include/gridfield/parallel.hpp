#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace gridfield {

// Splits [0, count) into contiguous chunks, one per thread. fn(begin, end, worker).
template <class Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), count));
  if (workers == 1) {
    fn(std::size_t{0}, count, 0);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t begin = std::min(count, w * chunk);
    const std::size_t end = std::min(count, begin + chunk);
    pool.emplace_back([&fn, begin, end, w] { fn(begin, end, static_cast<int>(w)); });
  }
  fn(std::size_t{0}, std::min(count, chunk), 0);
}

// Resolves a thread count: explicit value if positive, else GRIDFIELD_THREADS, else 1.
int resolve_threads(int requested);

}  // namespace gridfield
