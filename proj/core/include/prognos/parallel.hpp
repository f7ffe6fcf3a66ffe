#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace prognos {

/// Maximum number of worker threads. Reads PROGNOSTIC_THREADS when set,
/// otherwise hardware concurrency; always at least 1.
int thread_budget();

namespace detail {
void run_indexed(std::size_t n, int threads, const std::function<void(std::size_t)>& body);
}  // namespace detail

/// Evaluates f(0..n-1), possibly in parallel, and returns the results in
/// index order. Each slot is computed by exactly one thread, so the output
/// is identical for any thread count; reductions over the returned vector
/// should run in index order to keep results bitwise stable.
template <typename R, typename Fn>
std::vector<R> parallel_map(std::size_t n, Fn&& f) {
  std::vector<R> out(n);
  const int threads = thread_budget();
  if (n <= 1 || threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(i);
    return out;
  }
  detail::run_indexed(n, threads, [&](std::size_t i) { out[i] = f(i); });
  return out;
}

}  // namespace prognos
