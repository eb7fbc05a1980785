#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace linfreq {

// Splits [0, n) into `workers` contiguous ranges and runs fn(begin, end, index)
// for each on its own thread (inline when workers <= 1). Range boundaries
// depend only on (n, workers). The first exception thrown is rethrown.
template <class Fn>
void parallel_ranges(std::size_t n, unsigned workers, Fn&& fn) {
  workers = std::max(1u, workers);
  if (workers == 1 || n <= 1) {
    fn(std::size_t{0}, n, 0u);
    return;
  }
  const std::size_t used = std::min<std::size_t>(workers, n);
  std::vector<std::exception_ptr> errors(used);
  {
    std::vector<std::jthread> threads;
    threads.reserve(used);
    for (std::size_t w = 0; w < used; ++w) {
      const std::size_t begin = n * w / used;
      const std::size_t end = n * (w + 1) / used;
      threads.emplace_back([&, begin, end, w] {
        try {
          fn(begin, end, static_cast<unsigned>(w));
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline std::size_t shard_count(std::size_t n, unsigned workers) {
  return std::max<std::size_t>(1, std::min<std::size_t>(std::max(1u, workers), n));
}

}  // namespace linfreq
