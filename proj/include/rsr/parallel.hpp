#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace rsr {

// Kernel thread count: RSR_THREADS if set and positive, otherwise 1.
unsigned default_threads();

// Splits [0, count) into contiguous chunks, one per worker, and runs
// fn(begin, end, worker_index) on each. Runs inline when threads <= 1.
// The first exception thrown by any worker is rethrown on the caller.
template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    fn(std::size_t{0}, count, 0u);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, count);
  const std::size_t chunk = (count + workers - 1) / workers;
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto run = [&](std::size_t begin, std::size_t end, unsigned w) {
    try {
      fn(begin, end, w);
    } catch (...) {
      std::lock_guard lock(error_mu);
      if (!first_error) first_error = std::current_exception();
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(count, begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(run, begin, end, static_cast<unsigned>(w));
    }
    run(0, std::min(count, chunk), 0u);
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace rsr
