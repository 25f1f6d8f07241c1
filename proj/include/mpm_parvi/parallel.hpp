#pragma once

// Minimal fork-join helpers. Work is split into contiguous chunks, one per
// worker, so a fixed thread count always produces the same partition.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace mpm_parvi {

/// Calls fn(worker, begin, end) for `threads` contiguous chunks of [0, n).
/// The first exception (in worker order) is rethrown after all workers join.
template <class Fn>
void parallel_chunks(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, threads);
  if (threads == 1 || n < 2 * threads) {
    fn(0u, std::size_t{0}, n);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  const std::size_t chunk = (n + threads - 1) / threads;
  auto run = [&](unsigned w) {
    const std::size_t b = std::min(n, w * chunk);
    const std::size_t e = std::min(n, b + chunk);
    try {
      fn(w, b, e);
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  for (unsigned w = 1; w < threads; ++w) pool.emplace_back(run, w);
  run(0);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Number of chunks parallel_chunks will actually use for n items.
inline unsigned effective_workers(std::size_t n, unsigned threads) {
  threads = std::max(1u, threads);
  return (threads == 1 || n < 2 * threads) ? 1u : threads;
}

}  // namespace mpm_parvi
