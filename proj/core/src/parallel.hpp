#pragma once

#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace ddet::detail {

// Runs fn(k) for k in [0, n). Index k goes to worker k % threads, so the
// assignment never depends on timing; callers keep writes disjoint per k.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(threads < 1 ? 1 : threads);
  if (workers == 1 || n < 2) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  const std::size_t used = workers < n ? workers : n;
  std::vector<std::exception_ptr> errors(used);
  std::vector<std::thread> pool;
  pool.reserve(used);
  for (std::size_t t = 0; t < used; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t k = t; k < n; k += used) fn(k);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace ddet::detail
