#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace fsru {

// Process-wide worker count used by parallel_for; 0 means hardware default.
void set_thread_count(unsigned count);
unsigned thread_count();

namespace detail {
// Set while a thread runs a parallel_for chunk; nested loops then run inline.
inline thread_local bool in_parallel_region = false;

struct RegionGuard {
  bool previous;
  RegionGuard() : previous(in_parallel_region) { in_parallel_region = true; }
  ~RegionGuard() { in_parallel_region = previous; }
};
}  // namespace detail

// Runs body(begin, end) over contiguous chunks of [0, n). Chunks are
// disjoint, so bodies that only write their own indices stay deterministic.
template <typename Body>
void parallel_for(std::size_t n, Body&& body, std::size_t min_chunk = 256) {
  const unsigned workers = thread_count();
  if (workers <= 1 || n <= min_chunk || detail::in_parallel_region) {
    body(std::size_t{0}, n);
    return;
  }
  const std::size_t chunks =
      std::min<std::size_t>(workers, (n + min_chunk - 1) / min_chunk);
  const std::size_t step = (n + chunks - 1) / chunks;
  std::vector<std::exception_ptr> errors(chunks);
  std::vector<std::jthread> pool;
  pool.reserve(chunks - 1);
  for (std::size_t c = 1; c < chunks; ++c) {
    const std::size_t lo = c * step;
    const std::size_t hi = std::min(n, lo + step);
    if (lo >= hi) break;
    pool.emplace_back([&body, &errors, c, lo, hi] {
      const detail::RegionGuard guard;
      try {
        body(lo, hi);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  {
    const detail::RegionGuard guard;
    try {
      body(std::size_t{0}, std::min(n, step));
    } catch (...) {
      errors[0] = std::current_exception();
    }
  }
  pool.clear();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace fsru
